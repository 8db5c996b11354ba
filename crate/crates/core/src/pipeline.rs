//! End-to-end audit pipeline: quality filtering, the sample-level
//! train/eval split, class balancing, model training, per-user scoring,
//! grouping and report assembly.
//!
//! The split is by sample (all annotations of a sample land on the same
//! side) so text never leaks between training and evaluation; fold 0 of the
//! seeded k-fold plan is the held-out evaluation split. ADR profiles for
//! grouping come from the training split only, so grouping never peeks at
//! evaluation labels. Every model is scored against each user's own label
//! on the class-balanced evaluation annotations.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{AnnotatedDataset, Annotation};
use crate::error::{AuditError, Result};
use crate::fairness::{
    annotation_level_breakdown, default_bin_edges, group_users, grouped_evaluation,
    multi_metric_score, per_user_performance, sample_level_breakdown, unfairness_score,
    ExcludedUser, GroupedEvaluation, GroupingKind, GroupingStrategy, MetricKind, ScoredAnnotation,
};
use crate::featurize::FeatureSpec;
use crate::learn::{make_folds, train, tune_lambda, TrainConfig, LAMBDA_GRID};
use crate::models::{build_training_set, ModelConfig, ModelKind, TrainedAuditModel};
use crate::quality::{annotator_quality, filter_annotators};
use crate::report::{
    metric_names, AuditConfigRecord, AuditReport, BalancingRecord, DatasetSummary, ModelReport,
    QualityFilterRecord, SplitRecord, Warning, SCHEMA_VERSION,
};
use crate::stats::{compute_adr, sample_stats, tie_annotation_fraction};

/// Everything configurable about one audit run.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub models: Vec<ModelKind>,
    pub grouping: GroupingStrategy,
    pub metrics: Vec<MetricKind>,
    /// Quality filter threshold; None disables filtering.
    pub quality_threshold: Option<f64>,
    /// Minimum balanced evaluation annotations per scored user.
    pub min_support: usize,
    pub seed: u64,
    pub n_text_buckets: usize,
    pub train_config: TrainConfig,
    /// Grid-search l2_lambda by cross-validated accuracy on the training
    /// split before the final fit.
    pub tune: bool,
    pub k_folds: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Mv, ModelKind::Annotator],
            grouping: GroupingStrategy {
                kind: GroupingKind::AdrBins,
                bin_edges: default_bin_edges(),
                attribute: None,
            },
            metrics: vec![MetricKind::Accuracy],
            quality_threshold: None,
            min_support: 3,
            seed: 42,
            n_text_buckets: 1 << 18,
            train_config: TrainConfig::default(),
            tune: true,
            k_folds: 5,
        }
    }
}

/// Run the full audit and assemble the replayable report.
pub fn run_audit(dataset: &AnnotatedDataset, options: &AuditOptions) -> Result<AuditReport> {
    if options.models.is_empty() {
        return Err(AuditError::Config("no models requested".into()));
    }
    if options.metrics.is_empty() {
        return Err(AuditError::Config("no metrics requested".into()));
    }
    let fingerprint = dataset.fingerprint();
    let mut warnings: Vec<Warning> = Vec::new();

    // Quality filtering, recorded with the removed annotators' scores.
    let mut quality_filter = None;
    let filtered_dataset;
    let dataset = match options.quality_threshold {
        Some(threshold) => {
            let scores = annotator_quality(dataset);
            filtered_dataset = filter_annotators(dataset, &scores, threshold)?;
            let removed: Vec<_> = scores
                .values()
                .filter(|q| q.score < threshold)
                .cloned()
                .collect();
            if !removed.is_empty() {
                warnings.push(Warning::new(
                    "filtered_annotators",
                    format!(
                        "quality filter at {threshold} removed {} annotator(s)",
                        removed.len()
                    ),
                ));
            }
            quality_filter = Some(QualityFilterRecord { threshold, removed });
            &filtered_dataset
        }
        None => dataset,
    };
    let label_set = dataset.label_set().to_vec();

    // Sample-level split: fold 0 is the held-out evaluation split.
    let folds = make_folds(dataset.samples().len(), options.k_folds, options.seed)?;
    folds.assert_valid(dataset.samples().len());
    let eval_fold = 0usize;
    let eval_sample_ids: BTreeSet<String> = folds.folds[eval_fold]
        .iter()
        .map(|&i| dataset.samples()[i].sample_id.clone())
        .collect();
    let train_sample_ids: BTreeSet<String> = folds
        .training_indices(eval_fold)
        .into_iter()
        .map(|i| dataset.samples()[i].sample_id.clone())
        .collect();

    let train_annotations: Vec<Annotation> = dataset
        .annotations()
        .iter()
        .filter(|a| train_sample_ids.contains(&a.sample_id))
        .cloned()
        .collect();
    let eval_annotations: Vec<Annotation> = dataset
        .annotations()
        .iter()
        .filter(|a| eval_sample_ids.contains(&a.sample_id))
        .cloned()
        .collect();
    if train_annotations.is_empty() || eval_annotations.is_empty() {
        return Err(AuditError::Eval("a split ended up without annotations".into()));
    }

    let train_stats = sample_stats(&train_annotations, &label_set);
    let eval_stats = sample_stats(&eval_annotations, &label_set);
    let profiles = compute_adr(&train_annotations, &train_stats);

    let tie_fraction = tie_annotation_fraction(&train_stats);
    if tie_fraction > 0.01 {
        warnings.push(Warning::new(
            "mv_ties",
            format!(
                "{:.1}% of training annotations lie on majority-vote ties; \
                 ties break by label order",
                tie_fraction * 100.0
            ),
        ));
    }

    // Class-balance the evaluation annotations by seeded downsampling.
    let (balanced, balancing) = balance_annotations(
        &eval_annotations,
        &label_set,
        options.seed,
        &mut warnings,
    );

    let feature_spec = FeatureSpec::new(
        options.n_text_buckets,
        dataset.demographic_vocab().clone(),
        false,
    )?;

    // Per-model work is independent; order of results follows the request.
    let model_reports: Vec<ModelReport> = options
        .models
        .par_iter()
        .map(|&kind| -> Result<(ModelReport, Vec<Warning>)> {
            audit_one_model(
                kind,
                dataset,
                options,
                &feature_spec,
                &train_stats,
                &eval_stats,
                &train_sample_ids,
                &balanced,
                &profiles,
            )
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|(report, model_warnings)| {
            warnings.extend(model_warnings);
            report
        })
        .collect();

    Ok(AuditReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_fingerprint: fingerprint,
        config: AuditConfigRecord {
            models: options.models.clone(),
            grouping: options.grouping.clone(),
            metrics: metric_names(&options.metrics),
            quality_threshold: options.quality_threshold,
            min_support: options.min_support,
            seed: options.seed,
            feature_spec_hash: feature_spec.spec_hash(),
            feature_spec,
            train_config: options.train_config.clone(),
            tune: options.tune,
            k_folds: options.k_folds,
        },
        dataset_summary: DatasetSummary {
            n_samples: dataset.samples().len(),
            n_annotators: dataset.annotators().len(),
            n_annotations: dataset.annotations().len(),
            label_set,
            tie_annotation_fraction: tie_fraction,
        },
        split: SplitRecord {
            k_folds: options.k_folds,
            eval_fold,
            n_train_samples: train_sample_ids.len(),
            n_eval_samples: eval_sample_ids.len(),
            n_eval_annotations: balanced.len(),
        },
        balancing,
        quality_filter,
        warnings,
        models: model_reports,
    })
}

/// Downsample the majority classes so every label present in the
/// evaluation annotations is equally represented.
fn balance_annotations(
    eval_annotations: &[Annotation],
    label_set: &[String],
    seed: u64,
    warnings: &mut Vec<Warning>,
) -> (Vec<Annotation>, BalancingRecord) {
    // Canonical order first: the seeded subsample must not depend on the
    // incoming annotation order.
    let mut canonical: Vec<&Annotation> = eval_annotations.iter().collect();
    canonical.sort_by(|a, b| {
        (a.sample_id.as_str(), a.annotator_id.as_str())
            .cmp(&(b.sample_id.as_str(), b.annotator_id.as_str()))
    });

    let mut per_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ann) in canonical.iter().enumerate() {
        per_label.entry(ann.label.as_str()).or_default().push(i);
    }
    for label in label_set {
        if !per_label.contains_key(label.as_str()) {
            warnings.push(Warning::new(
                "missing_label_in_eval",
                format!("label {label:?} has no evaluation annotations"),
            ));
        }
    }
    if per_label.len() < 2 {
        warnings.push(Warning::new(
            "unbalanced_eval",
            "only one label present in the evaluation split; balancing skipped",
        ));
        let record = BalancingRecord {
            seed,
            kept_per_label: per_label
                .iter()
                .map(|(l, v)| (l.to_string(), v.len()))
                .collect(),
            discarded_per_label: per_label.keys().map(|l| (l.to_string(), 0))
                .collect(),
        };
        return (canonical.into_iter().cloned().collect(), record);
    }

    let target = per_label.values().map(|v| v.len()).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    let mut kept_per_label = BTreeMap::new();
    let mut discarded_per_label = BTreeMap::new();
    // label_set order fixes the rng consumption order.
    for label in label_set {
        let Some(indices) = per_label.get(label.as_str()) else {
            continue;
        };
        if indices.len() > target {
            for pick in index_sample(&mut rng, indices.len(), target) {
                keep.push(indices[pick]);
            }
        } else {
            keep.extend(indices.iter().copied());
        }
        kept_per_label.insert(label.clone(), target.min(indices.len()));
        discarded_per_label.insert(label.clone(), indices.len() - target.min(indices.len()));
    }
    keep.sort_unstable();
    let balanced: Vec<Annotation> = keep.into_iter().map(|i| canonical[i].clone()).collect();
    (
        balanced,
        BalancingRecord {
            seed,
            kept_per_label,
            discarded_per_label,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn audit_one_model(
    kind: ModelKind,
    dataset: &AnnotatedDataset,
    options: &AuditOptions,
    feature_spec: &FeatureSpec,
    train_stats: &BTreeMap<String, crate::stats::SampleStats>,
    eval_stats: &BTreeMap<String, crate::stats::SampleStats>,
    train_sample_ids: &BTreeSet<String>,
    balanced: &[Annotation],
    profiles: &BTreeMap<String, crate::stats::AnnotatorProfile>,
) -> Result<(ModelReport, Vec<Warning>)> {
    let label_set = dataset.label_set();
    let mut warnings = Vec::new();
    let config = ModelConfig::new(kind, feature_spec.clone(), options.train_config.clone());

    // Train (or build the oracle table).
    let mut tuning = None;
    let trained = match kind {
        ModelKind::Oracle => TrainedAuditModel::oracle(config.clone(), balanced),
        _ => {
            let examples = build_training_set(dataset, train_stats, &config, train_sample_ids)?;
            let mut final_config = config.clone();
            if options.tune {
                let outcome = tune_lambda(
                    &examples,
                    label_set,
                    &config.train_config,
                    &LAMBDA_GRID,
                    options.k_folds,
                )?;
                final_config.train_config.l2_lambda = outcome.best_lambda;
                tuning = Some(outcome);
            }
            let model = train(&examples, label_set, &final_config.train_config)?;
            TrainedAuditModel::learned(final_config, model)
        }
    };
    let l2_lambda = trained.config.train_config.l2_lambda;

    // Score every balanced evaluation annotation against the user's own label.
    let scored: Vec<ScoredAnnotation> = balanced
        .iter()
        .map(|ann| -> Result<ScoredAnnotation> {
            let sample = dataset
                .sample(&ann.sample_id)
                .ok_or_else(|| AuditError::Eval(format!("unknown sample {}", ann.sample_id)))?;
            let annotator = dataset.annotator(&ann.annotator_id).ok_or_else(|| {
                AuditError::Eval(format!("unknown annotator {}", ann.annotator_id))
            })?;
            let predicted = trained.predict_for_user(sample, annotator)?;
            Ok(ScoredAnnotation {
                sample_id: ann.sample_id.clone(),
                annotator_id: ann.annotator_id.clone(),
                label: ann.label.clone(),
                predicted,
            })
        })
        .collect::<Result<_>>()?;

    let (mut per_user, mut excluded) =
        per_user_performance(&scored, &options.metrics, label_set, options.min_support);

    // Users without a training-split profile cannot be grouped.
    let ungrouped: Vec<String> = per_user
        .keys()
        .filter(|id| !profiles.contains_key(*id))
        .cloned()
        .collect();
    if !ungrouped.is_empty() {
        warnings.push(Warning::new(
            "ungrouped_users",
            format!(
                "{} evaluated user(s) have no training-split annotations and were excluded ({})",
                ungrouped.len(),
                kind.name()
            ),
        ));
        for id in &ungrouped {
            let removed = per_user.remove(id).expect("listed from keys");
            excluded.push(ExcludedUser {
                annotator_id: id.clone(),
                n_eval_annotations: removed.n_eval_annotations,
                reason: "no training-split annotations to group by".into(),
            });
        }
    }
    if !excluded.is_empty() {
        warnings.push(Warning::new(
            "excluded_users",
            format!("{} user(s) excluded from {} scoring", excluded.len(), kind.name()),
        ));
    }

    // Primary grouping: per-user groups or bin breakdowns.
    let grouped: Vec<GroupedEvaluation> = match options.grouping.kind {
        GroupingKind::AdrBins | GroupingKind::DemographicPartition => {
            let skeleton = group_users(profiles, &options.grouping, dataset.annotators())?;
            options
                .metrics
                .iter()
                .map(|&metric| grouped_evaluation(&skeleton, &per_user, &options.grouping, metric))
                .collect()
        }
        GroupingKind::PopularityBins => options
            .metrics
            .iter()
            .map(|&metric| {
                annotation_level_breakdown(
                    &scored,
                    eval_stats,
                    &options.grouping.bin_edges,
                    metric,
                    label_set,
                )
            })
            .collect::<Result<_>>()?,
        GroupingKind::AmbiguityBins => options
            .metrics
            .iter()
            .map(|&metric| {
                sample_level_breakdown(
                    &scored,
                    eval_stats,
                    &options.grouping.bin_edges,
                    metric,
                    label_set,
                )
            })
            .collect::<Result<_>>()?,
    };
    for evaluation in &grouped {
        for empty in &evaluation.empty_groups {
            warnings.push(Warning::new(
                "empty_groups",
                format!("{} is empty under {} ({})", empty, evaluation.metric, kind.name()),
            ));
        }
    }

    let (score, per_metric) = multi_metric_score(&grouped)?;
    // Surface the single-metric path too: the combined score must agree.
    debug_assert!(
        (score.unfairness - unfairness_score(&grouped[0]).unwrap().unfairness).abs() < 1e-12
            || options.metrics.len() > 1
    );

    // Supplementary breakdown tables, always accuracy-based.
    let breakdown_edges = match options.grouping.kind {
        GroupingKind::PopularityBins | GroupingKind::AmbiguityBins => {
            options.grouping.bin_edges.clone()
        }
        _ => default_bin_edges(),
    };
    let popularity_breakdown = annotation_level_breakdown(
        &scored,
        eval_stats,
        &breakdown_edges,
        MetricKind::Accuracy,
        label_set,
    )?;
    let ambiguity_breakdown = sample_level_breakdown(
        &scored,
        eval_stats,
        &breakdown_edges,
        MetricKind::Accuracy,
        label_set,
    )?;

    Ok((
        ModelReport {
            kind,
            l2_lambda,
            tuning,
            score,
            per_metric,
            grouped,
            popularity_breakdown,
            ambiguity_breakdown,
            excluded_users: excluded,
        },
        warnings,
    ))
}
