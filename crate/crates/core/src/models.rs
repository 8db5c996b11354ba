//! The three comparable audit configurations: a model trained on the
//! majority vote (text only), a model trained on raw annotations with
//! demographic features, and a lookup oracle returning each annotator's
//! recorded label.
//!
//! Every configuration is evaluated the same way: its prediction for a
//! (sample, annotator) pair is compared against that annotator's own label.
//! Scoring the majority-vote model against each user's own annotation
//! rather than against the majority label is deliberate; it is the only
//! reading under which that model can be unfair to anyone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotation, Annotator, Sample};
use crate::error::{AuditError, Result};
use crate::featurize::{featurize_pair, FeatureSpec, FeatureVector};
use crate::learn::{LrModel, TrainConfig};
use crate::stats::SampleStats;

/// Which audit configuration a model implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Trained on one example per sample, labeled with the majority vote.
    Mv,
    /// Trained on one example per annotation, with demographic features.
    Annotator,
    /// Returns the recorded label for every annotated pair; by construction
    /// perfectly accurate and fair.
    Oracle,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mv => "mv",
            ModelKind::Annotator => "annotator",
            ModelKind::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = AuditError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mv" => Ok(ModelKind::Mv),
            "annotator" => Ok(ModelKind::Annotator),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(AuditError::Config(format!(
                "unknown model kind {other:?} (expected mv, annotator or oracle)"
            ))),
        }
    }
}

/// One audit configuration. Constructors enforce the feature contract:
/// the majority-vote model never sees demographics, the annotator model
/// always does, and the oracle ignores features entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_spec: FeatureSpec,
    pub train_config: TrainConfig,
}

impl ModelConfig {
    pub fn mv(mut feature_spec: FeatureSpec, train_config: TrainConfig) -> Self {
        feature_spec.include_demographics = false;
        Self {
            kind: ModelKind::Mv,
            feature_spec,
            train_config,
        }
    }

    pub fn annotator(mut feature_spec: FeatureSpec, train_config: TrainConfig) -> Self {
        feature_spec.include_demographics = true;
        Self {
            kind: ModelKind::Annotator,
            feature_spec,
            train_config,
        }
    }

    pub fn oracle(mut feature_spec: FeatureSpec, train_config: TrainConfig) -> Self {
        feature_spec.include_demographics = false;
        Self {
            kind: ModelKind::Oracle,
            feature_spec,
            train_config,
        }
    }

    pub fn new(kind: ModelKind, feature_spec: FeatureSpec, train_config: TrainConfig) -> Self {
        match kind {
            ModelKind::Mv => Self::mv(feature_spec, train_config),
            ModelKind::Annotator => Self::annotator(feature_spec, train_config),
            ModelKind::Oracle => Self::oracle(feature_spec, train_config),
        }
    }
}

/// Training examples for a configuration, restricted to `sample_ids`.
///
/// The majority-vote model gets one example per sample labeled with the
/// majority label from `stats`; the annotator model gets one example per
/// annotation labeled with that annotator's own label; the oracle needs no
/// training data.
pub fn build_training_set(
    dataset: &AnnotatedDataset,
    stats: &BTreeMap<String, SampleStats>,
    config: &ModelConfig,
    sample_ids: &BTreeSet<String>,
) -> Result<Vec<(FeatureVector, usize)>> {
    let label_index = |label: &str| -> Result<usize> {
        dataset
            .label_index(label)
            .ok_or_else(|| AuditError::Schema(format!("label {label:?} not in label set")))
    };
    match config.kind {
        ModelKind::Oracle => Ok(Vec::new()),
        ModelKind::Mv => {
            let mut examples = Vec::new();
            for sample in dataset.samples() {
                if !sample_ids.contains(&sample.sample_id) {
                    continue;
                }
                let s = stats.get(&sample.sample_id).ok_or_else(|| {
                    AuditError::Eval(format!("no stats for sample {}", sample.sample_id))
                })?;
                let x = featurize_pair(
                    &sample.text,
                    &Annotator {
                        annotator_id: String::new(),
                        demographics: None,
                    },
                    &config.feature_spec,
                );
                examples.push((x, label_index(&s.majority_label)?));
            }
            Ok(examples)
        }
        ModelKind::Annotator => {
            let mut examples = Vec::new();
            for ann in dataset.annotations() {
                if !sample_ids.contains(&ann.sample_id) {
                    continue;
                }
                let sample = dataset
                    .sample(&ann.sample_id)
                    .expect("validated annotation");
                let annotator = dataset
                    .annotator(&ann.annotator_id)
                    .expect("validated annotation");
                let x = featurize_pair(&sample.text, annotator, &config.feature_spec);
                examples.push((x, label_index(&ann.label)?));
            }
            Ok(examples)
        }
    }
}

/// A configuration ready to answer (sample, annotator) queries.
#[derive(Debug, Clone)]
pub struct TrainedAuditModel {
    pub config: ModelConfig,
    /// Learned weights; absent for the oracle.
    pub model: Option<LrModel>,
    /// Evaluation annotation table; present only for the oracle.
    oracle_table: Option<BTreeMap<(String, String), String>>,
}

impl TrainedAuditModel {
    pub fn learned(config: ModelConfig, model: LrModel) -> Self {
        Self {
            config,
            model: Some(model),
            oracle_table: None,
        }
    }

    /// Oracle over the given evaluation annotations. Defined only on
    /// annotated pairs; any other query is an error.
    pub fn oracle(config: ModelConfig, eval_annotations: &[Annotation]) -> Self {
        let table = eval_annotations
            .iter()
            .map(|a| {
                (
                    (a.sample_id.clone(), a.annotator_id.clone()),
                    a.label.clone(),
                )
            })
            .collect();
        Self {
            config,
            model: None,
            oracle_table: Some(table),
        }
    }

    /// Predicted label for one (sample, annotator) pair. The majority-vote
    /// model ignores the annotator; the annotator model conditions on the
    /// demographic block; the oracle looks the pair up.
    pub fn predict_for_user(&self, sample: &Sample, annotator: &Annotator) -> Result<String> {
        match self.config.kind {
            ModelKind::Oracle => {
                let table = self
                    .oracle_table
                    .as_ref()
                    .ok_or_else(|| AuditError::Eval("oracle has no annotation table".into()))?;
                table
                    .get(&(sample.sample_id.clone(), annotator.annotator_id.clone()))
                    .cloned()
                    .ok_or_else(|| {
                        AuditError::Eval(format!(
                            "oracle has no annotation for ({}, {})",
                            sample.sample_id, annotator.annotator_id
                        ))
                    })
            }
            ModelKind::Mv | ModelKind::Annotator => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| AuditError::Eval("model was not trained".into()))?;
                let x = featurize_pair(&sample.text, annotator, &self.config.feature_spec);
                Ok(model.predict_label(&x)?.to_string())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::featurize_sample;
    use crate::learn::train;
    use crate::stats::{compute_adr, sample_stats};
    use std::collections::BTreeMap as Map;

    fn dataset() -> AnnotatedDataset {
        // Three samples, three annotators; a2 dissents on s1.
        let samples = vec![
            Sample { sample_id: "s1".into(), text: "alpha beta".into() },
            Sample { sample_id: "s2".into(), text: "gamma delta".into() },
            Sample { sample_id: "s3".into(), text: "alpha delta".into() },
        ];
        let vocab = Map::from([("gender".to_string(), vec!["f".to_string(), "m".to_string()])]);
        let annot = |id: &str, g: &str| Annotator {
            annotator_id: id.into(),
            demographics: Some(Map::from([("gender".to_string(), g.to_string())])),
        };
        let annotators = vec![annot("a1", "f"), annot("a2", "m"), annot("a3", "f")];
        let ann = |s: &str, a: &str, l: &str| Annotation {
            sample_id: s.into(),
            annotator_id: a.into(),
            label: l.into(),
        };
        let annotations = vec![
            ann("s1", "a1", "T"),
            ann("s1", "a2", "NT"),
            ann("s1", "a3", "T"),
            ann("s2", "a1", "NT"),
            ann("s2", "a2", "NT"),
            ann("s2", "a3", "NT"),
            ann("s3", "a1", "T"),
            ann("s3", "a2", "T"),
            ann("s3", "a3", "T"),
        ];
        AnnotatedDataset::new(
            vec!["T".into(), "NT".into()],
            vocab,
            samples,
            annotators,
            annotations,
        )
        .unwrap()
    }

    fn spec(include_demographics: bool) -> FeatureSpec {
        FeatureSpec::new(
            1 << 8,
            Map::from([("gender".to_string(), vec!["f".to_string(), "m".to_string()])]),
            include_demographics,
        )
        .unwrap()
    }

    fn all_sample_ids(ds: &AnnotatedDataset) -> BTreeSet<String> {
        ds.samples().iter().map(|s| s.sample_id.clone()).collect()
    }

    #[test]
    fn training_set_sizes_follow_the_configuration() {
        let ds = dataset();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let ids = all_sample_ids(&ds);
        let mv = ModelConfig::mv(spec(false), TrainConfig::default());
        let annotator = ModelConfig::annotator(spec(true), TrainConfig::default());
        let oracle = ModelConfig::oracle(spec(false), TrainConfig::default());
        assert_eq!(build_training_set(&ds, &stats, &mv, &ids).unwrap().len(), 3);
        assert_eq!(
            build_training_set(&ds, &stats, &annotator, &ids).unwrap().len(),
            9
        );
        assert!(build_training_set(&ds, &stats, &oracle, &ids).unwrap().is_empty());
    }

    #[test]
    fn mv_training_labels_are_majority_labels() {
        let ds = dataset();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let ids = BTreeSet::from(["s1".to_string()]);
        let mv = ModelConfig::mv(spec(false), TrainConfig::default());
        let examples = build_training_set(&ds, &stats, &mv, &ids).unwrap();
        assert_eq!(examples.len(), 1);
        // s1 is annotated T, NT, T: the majority is T (index 0).
        assert_eq!(examples[0].1, 0);
    }

    #[test]
    fn mv_label_for_a_twenty_eighty_sample_is_the_eighty_side() {
        // One sample annotated T by 2 of 10 annotators and NT by 8.
        let samples = vec![Sample { sample_id: "s".into(), text: "ozone article".into() }];
        let mut annotators = Vec::new();
        let mut annotations = Vec::new();
        for i in 0..10 {
            let id = format!("a{i}");
            annotators.push(Annotator { annotator_id: id.clone(), demographics: None });
            annotations.push(Annotation {
                sample_id: "s".into(),
                annotator_id: id,
                label: if i < 2 { "T".into() } else { "NT".into() },
            });
        }
        let ds = AnnotatedDataset::new(
            vec!["T".into(), "NT".into()],
            Map::new(),
            samples,
            annotators,
            annotations,
        )
        .unwrap();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let mv = ModelConfig::mv(spec(false), TrainConfig::default());
        let ids = BTreeSet::from(["s".to_string()]);
        let examples = build_training_set(&ds, &stats, &mv, &ids).unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(ds.label_set()[examples[0].1], "NT");
    }

    #[test]
    fn constructors_enforce_the_feature_contract() {
        assert!(!ModelConfig::mv(spec(true), TrainConfig::default())
            .feature_spec
            .include_demographics);
        assert!(ModelConfig::annotator(spec(false), TrainConfig::default())
            .feature_spec
            .include_demographics);
    }

    #[test]
    fn oracle_returns_the_recorded_label_and_errors_on_misses() {
        let ds = dataset();
        let config = ModelConfig::oracle(spec(false), TrainConfig::default());
        let oracle = TrainedAuditModel::oracle(config, ds.annotations());
        for ann in ds.annotations() {
            let sample = ds.sample(&ann.sample_id).unwrap();
            let annotator = ds.annotator(&ann.annotator_id).unwrap();
            assert_eq!(
                oracle.predict_for_user(sample, annotator).unwrap(),
                ann.label
            );
        }
        let stranger = Annotator {
            annotator_id: "a9".into(),
            demographics: None,
        };
        let err = oracle
            .predict_for_user(ds.sample("s1").unwrap(), &stranger)
            .unwrap_err();
        assert!(err.to_string().contains("a9"));
    }

    #[test]
    fn mv_model_ignores_the_annotator() {
        let ds = dataset();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let config = ModelConfig::mv(spec(false), TrainConfig::default());
        let examples =
            build_training_set(&ds, &stats, &config, &all_sample_ids(&ds)).unwrap();
        let model = train(&examples, ds.label_set(), &config.train_config).unwrap();
        let trained = TrainedAuditModel::learned(config, model);
        let sample = ds.sample("s1").unwrap();
        let p1 = trained
            .predict_for_user(sample, ds.annotator("a1").unwrap())
            .unwrap();
        let p2 = trained
            .predict_for_user(sample, ds.annotator("a2").unwrap())
            .unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn annotator_model_is_deterministic_in_demographics() {
        let ds = dataset();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let config = ModelConfig::annotator(spec(true), TrainConfig::default());
        let examples =
            build_training_set(&ds, &stats, &config, &all_sample_ids(&ds)).unwrap();
        let model = train(&examples, ds.label_set(), &config.train_config).unwrap();
        let trained = TrainedAuditModel::learned(config, model);
        let sample = ds.sample("s2").unwrap();
        // a1 and a3 share demographics, so the prediction must match.
        let p1 = trained
            .predict_for_user(sample, ds.annotator("a1").unwrap())
            .unwrap();
        let p3 = trained
            .predict_for_user(sample, ds.annotator("a3").unwrap())
            .unwrap();
        assert_eq!(p1, p3);
    }

    /// With a hand-built model that reproduces the majority vote exactly,
    /// per-user accuracy over the full annotation set equals 1 - ADR.
    #[test]
    fn exact_mv_model_accuracy_is_one_minus_adr() {
        let ds = dataset();
        let stats = sample_stats(ds.annotations(), ds.label_set());
        let profiles = compute_adr(ds.annotations(), &stats);

        // Weight each sample's tokens toward its majority label.
        let s = spec(false);
        let mut weights = vec![vec![0.0; s.width()]; 2];
        for sample in ds.samples() {
            let majority = &stats[&sample.sample_id].majority_label;
            let class = ds.label_index(majority).unwrap();
            for (i, w) in featurize_sample(&sample.text, &s).entries {
                weights[class][i] += 10.0 * w;
            }
        }
        let model = LrModel::from_weights(
            ds.label_set().to_vec(),
            weights,
            vec![0.0, 0.0],
        )
        .unwrap();
        let trained = TrainedAuditModel::learned(
            ModelConfig::mv(s, TrainConfig::default()),
            model,
        );
        // The hand-built model must actually reproduce the majority vote.
        for sample in ds.samples() {
            let p = trained
                .predict_for_user(sample, ds.annotator("a1").unwrap())
                .unwrap();
            assert_eq!(p, stats[&sample.sample_id].majority_label);
        }

        for annotator in ds.annotators() {
            let mut correct = 0usize;
            let mut total = 0usize;
            for ann in ds.annotations() {
                if ann.annotator_id != annotator.annotator_id {
                    continue;
                }
                let sample = ds.sample(&ann.sample_id).unwrap();
                let predicted = trained.predict_for_user(sample, annotator).unwrap();
                if predicted == ann.label {
                    correct += 1;
                }
                total += 1;
            }
            let accuracy = correct as f64 / total as f64;
            let adr = profiles[&annotator.annotator_id].adr;
            assert!(
                (accuracy - (1.0 - adr)).abs() < 1e-12,
                "{}: accuracy {accuracy}, adr {adr}",
                annotator.annotator_id
            );
        }
    }
}
