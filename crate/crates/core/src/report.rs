//! The audit report: a self-contained, replayable record of one audit run.
//!
//! Every seed, threshold and configuration knob lands in the report, so an
//! audit can be re-run bit-for-bit from its own report. The JSON form is
//! schema-versioned and round-trips losslessly; CSV flattens the group
//! tables; the text form ranks models from most to least fair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fairness::{
    AuditScore, ExcludedUser, GroupedEvaluation, GroupingStrategy, MetricKind,
};
use crate::featurize::FeatureSpec;
use crate::learn::{TrainConfig, TuneOutcome};
use crate::models::ModelKind;
use crate::quality::QualityScore;

pub const SCHEMA_VERSION: u32 = 1;

/// A warning with a stable machine-readable code. Codes:
/// `mv_ties`, `empty_groups`, `excluded_users`, `filtered_annotators`,
/// `ungrouped_users`, `missing_label_in_eval`, `unbalanced_eval`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// The configuration that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfigRecord {
    pub models: Vec<ModelKind>,
    pub grouping: GroupingStrategy,
    pub metrics: Vec<String>,
    pub quality_threshold: Option<f64>,
    pub min_support: usize,
    pub seed: u64,
    pub feature_spec: FeatureSpec,
    pub feature_spec_hash: String,
    pub train_config: TrainConfig,
    pub tune: bool,
    pub k_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub n_annotators: usize,
    pub n_annotations: usize,
    pub label_set: Vec<String>,
    /// Fraction of annotations lying on majority-vote ties, over the
    /// training split used for ADR grouping.
    pub tie_annotation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub k_folds: usize,
    /// Which fold serves as the held-out evaluation split.
    pub eval_fold: usize,
    pub n_train_samples: usize,
    pub n_eval_samples: usize,
    pub n_eval_annotations: usize,
}

/// Class balancing of the evaluation annotations by seeded downsampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancingRecord {
    pub seed: u64,
    pub kept_per_label: BTreeMap<String, usize>,
    pub discarded_per_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityFilterRecord {
    pub threshold: f64,
    /// Annotators removed by the filter, with their scores.
    pub removed: Vec<QualityScore>,
}

/// Audit results for one model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    /// Regularization actually used (after tuning, when enabled).
    pub l2_lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneOutcome>,
    /// Combined score over all requested metrics.
    pub score: AuditScore,
    pub per_metric: Vec<AuditScore>,
    /// One grouped evaluation per metric under the primary grouping.
    pub grouped: Vec<GroupedEvaluation>,
    pub popularity_breakdown: GroupedEvaluation,
    pub ambiguity_breakdown: GroupedEvaluation,
    pub excluded_users: Vec<ExcludedUser>,
}

/// A complete, replayable audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub dataset_fingerprint: String,
    pub config: AuditConfigRecord,
    pub dataset_summary: DatasetSummary,
    pub split: SplitRecord,
    pub balancing: BalancingRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_filter: Option<QualityFilterRecord>,
    pub warnings: Vec<Warning>,
    pub models: Vec<ModelReport>,
}

/// Output formats for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

/// Serialize a report. JSON round-trips losslessly; CSV flattens the group
/// and breakdown tables; text gives a ranked summary.
pub fn render_report(report: &AuditReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => Ok(render_text(report).into_bytes()),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<AuditReport> {
    Ok(serde_json::from_slice(bytes)?)
}

fn render_csv(report: &AuditReport) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["model", "table", "metric", "row", "n", "value"])?;
    for model in &report.models {
        for score in &model.per_metric {
            writer.write_record([
                model.kind.name(),
                "score",
                &score.metrics.join("+"),
                "unfairness",
                "",
                &format!("{}", score.unfairness),
            ])?;
            writer.write_record([
                model.kind.name(),
                "score",
                &score.metrics.join("+"),
                "general_performance",
                "",
                &format!("{}", score.general_performance),
            ])?;
        }
        let tables = model
            .grouped
            .iter()
            .map(|g| ("groups", g))
            .chain(std::iter::once(("popularity", &model.popularity_breakdown)))
            .chain(std::iter::once(("ambiguity", &model.ambiguity_breakdown)));
        for (table, grouped) in tables {
            for group in &grouped.groups {
                writer.write_record([
                    model.kind.name(),
                    table,
                    &grouped.metric,
                    &group.group_id,
                    &group.n_members.to_string(),
                    &group.mean.map(|m| m.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    writer
        .into_inner()
        .map_err(|e| crate::error::AuditError::Eval(format!("csv flush: {e}")))
}

fn render_text(report: &AuditReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "opinion-audit report (schema {}, tool {})",
        report.schema_version, report.tool_version
    );
    let _ = writeln!(out, "dataset: {}", report.dataset_fingerprint);
    let _ = writeln!(
        out,
        "  {} samples, {} annotators, {} annotations; labels {:?}",
        report.dataset_summary.n_samples,
        report.dataset_summary.n_annotators,
        report.dataset_summary.n_annotations,
        report.dataset_summary.label_set,
    );
    let _ = writeln!(
        out,
        "grouping: {}; metrics: {}; min support {}; seed {}",
        report.config.grouping.describe(),
        report.config.metrics.join(", "),
        report.config.min_support,
        report.config.seed,
    );

    if report.models.len() > 1 {
        let line = report
            .models
            .iter()
            .map(|m| format!("{}: {:.2}", m.kind.name(), m.score.unfairness))
            .collect::<Vec<_>>()
            .join(" vs ");
        let _ = writeln!(out, "unfairness: {line}");
    }

    let mut ranked: Vec<&ModelReport> = report.models.iter().collect();
    ranked.sort_by(|a, b| {
        a.score
            .unfairness
            .partial_cmp(&b.score.unfairness)
            .expect("scores are finite")
    });
    let _ = writeln!(out, "ranking (most to least fair):");
    for (i, model) in ranked.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {}. {:<10} unfairness {:.4}  performance {:.4}",
            i + 1,
            model.kind.name(),
            model.score.unfairness,
            model.score.general_performance,
        );
    }

    for model in &report.models {
        let _ = writeln!(out, "\nmodel {} (l2_lambda {}):", model.kind.name(), model.l2_lambda);
        for grouped in &model.grouped {
            let _ = writeln!(out, "  {} by {}:", grouped.metric, grouped.strategy.describe());
            for group in &grouped.groups {
                match group.mean {
                    Some(mean) => {
                        let _ = writeln!(
                            out,
                            "    {:<24} n={:<5} mean {:.4}",
                            group.group_id, group.n_members, mean
                        );
                    }
                    None => {
                        let _ = writeln!(out, "    {:<24} (empty)", group.group_id);
                    }
                }
            }
        }
        if !model.excluded_users.is_empty() {
            let _ = writeln!(out, "  excluded users: {}", model.excluded_users.len());
        }
    }

    if let Some(filter) = &report.quality_filter {
        let _ = writeln!(
            out,
            "\nquality filter at {}: removed {} annotator(s)",
            filter.threshold,
            filter.removed.len()
        );
        for q in &filter.removed {
            let _ = writeln!(out, "  {} score {:.4}", q.annotator_id, q.score);
        }
    }

    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\nwarnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  [{}] {}", w.code, w.message);
        }
    }
    out
}

/// Side-by-side text comparison of two saved reports.
pub fn render_comparison(a: &AuditReport, b: &AuditReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "report A: {}", a.dataset_fingerprint);
    let _ = writeln!(out, "report B: {}", b.dataset_fingerprint);
    let _ = writeln!(
        out,
        "{:<12} {:>14} {:>14} {:>14} {:>14}",
        "model", "A unfairness", "B unfairness", "A performance", "B performance"
    );
    let kinds: Vec<ModelKind> = {
        let mut v: Vec<ModelKind> = a.models.iter().chain(&b.models).map(|m| m.kind).collect();
        v.sort();
        v.dedup();
        v
    };
    for kind in kinds {
        let find = |r: &AuditReport| {
            r.models
                .iter()
                .find(|m| m.kind == kind)
                .map(|m| (m.score.unfairness, m.score.general_performance))
        };
        let fmt = |v: Option<(f64, f64)>, which: usize| match v {
            Some(pair) => format!("{:.4}", if which == 0 { pair.0 } else { pair.1 }),
            None => "-".to_string(),
        };
        let va = find(a);
        let vb = find(b);
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>14} {:>14} {:>14}",
            kind.name(),
            fmt(va, 0),
            fmt(vb, 0),
            fmt(va, 1),
            fmt(vb, 1),
        );
    }
    out
}

/// Metric names in CLI order for a metric list.
pub fn metric_names(metrics: &[MetricKind]) -> Vec<String> {
    metrics.iter().map(|m| m.name().to_string()).collect()
}
