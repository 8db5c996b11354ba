//! The audit core: per-user performance, grouping strategies, group
//! aggregation and the unfairness / general-performance scores.
//!
//! Unfairness is the population standard deviation of the non-empty group
//! means and general performance is their arithmetic mean; groups carry
//! equal weight regardless of size. Member values are sorted by id before
//! aggregation so the result cannot depend on input or scheduling order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotator};
use crate::error::{AuditError, Result};
use crate::stats::{popularity, AnnotatorProfile, SampleStats};

/// One model prediction paired with the annotation it is judged against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredAnnotation {
    pub sample_id: String,
    pub annotator_id: String,
    /// The annotator's own label: the ground truth for this pair.
    pub label: String,
    pub predicted: String,
}

impl ScoredAnnotation {
    pub fn is_correct(&self) -> bool {
        self.label == self.predicted
    }
}

/// Performance metrics computable per user. Precision, recall and F1 are
/// macro-averaged over the classes present for that user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
        }
    }

    /// Evaluate the metric over a set of scored annotations. Returns a
    /// value in [0, 1]; empty input yields 0.
    pub fn evaluate(&self, scored: &[&ScoredAnnotation], label_set: &[String]) -> f64 {
        if scored.is_empty() {
            return 0.0;
        }
        match self {
            MetricKind::Accuracy => {
                scored.iter().filter(|s| s.is_correct()).count() as f64 / scored.len() as f64
            }
            MetricKind::Precision => macro_average(scored, label_set, |tp, pred, _| {
                (pred > 0).then(|| tp as f64 / pred as f64)
            }),
            MetricKind::Recall => macro_average(scored, label_set, |tp, _, truth| {
                (truth > 0).then(|| tp as f64 / truth as f64)
            }),
            MetricKind::F1 => macro_average(scored, label_set, |tp, pred, truth| {
                if pred == 0 && truth == 0 {
                    return None;
                }
                let p = if pred > 0 { tp as f64 / pred as f64 } else { 0.0 };
                let r = if truth > 0 { tp as f64 / truth as f64 } else { 0.0 };
                Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
            }),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = AuditError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(MetricKind::Accuracy),
            "precision" => Ok(MetricKind::Precision),
            "recall" => Ok(MetricKind::Recall),
            "f1" => Ok(MetricKind::F1),
            other => Err(AuditError::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// Per-class (true positives, predicted count, truth count) folded through
/// `per_class`; classes where `per_class` returns None are skipped.
fn macro_average<F>(scored: &[&ScoredAnnotation], label_set: &[String], per_class: F) -> f64
where
    F: Fn(usize, usize, usize) -> Option<f64>,
{
    let mut values = Vec::new();
    for label in label_set {
        let tp = scored
            .iter()
            .filter(|s| s.label == *label && s.predicted == *label)
            .count();
        let pred = scored.iter().filter(|s| s.predicted == *label).count();
        let truth = scored.iter().filter(|s| s.label == *label).count();
        if let Some(v) = per_class(tp, pred, truth) {
            values.push(v);
        }
    }
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Metric values for one evaluated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerUserPerformance {
    pub annotator_id: String,
    /// Metric name to value in [0, 1].
    pub metrics: BTreeMap<String, f64>,
    pub n_eval_annotations: usize,
}

/// A user excluded from grouping, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedUser {
    pub annotator_id: String,
    pub n_eval_annotations: usize,
    pub reason: String,
}

/// Compute each user's metrics over their own evaluation annotations.
/// Users with fewer than `min_support` annotations are excluded and listed:
/// single-annotation accuracies are 0/1 noise that inflates group variance.
pub fn per_user_performance(
    scored: &[ScoredAnnotation],
    metrics: &[MetricKind],
    label_set: &[String],
    min_support: usize,
) -> (BTreeMap<String, PerUserPerformance>, Vec<ExcludedUser>) {
    let mut by_user: BTreeMap<&str, Vec<&ScoredAnnotation>> = BTreeMap::new();
    for s in scored {
        by_user.entry(s.annotator_id.as_str()).or_default().push(s);
    }
    let mut performances = BTreeMap::new();
    let mut excluded = Vec::new();
    for (annotator_id, anns) in by_user {
        if anns.len() < min_support {
            excluded.push(ExcludedUser {
                annotator_id: annotator_id.to_string(),
                n_eval_annotations: anns.len(),
                reason: format!("below minimum support {min_support}"),
            });
            continue;
        }
        let values = metrics
            .iter()
            .map(|m| (m.name().to_string(), m.evaluate(&anns, label_set)))
            .collect();
        performances.insert(
            annotator_id.to_string(),
            PerUserPerformance {
                annotator_id: annotator_id.to_string(),
                metrics: values,
                n_eval_annotations: anns.len(),
            },
        );
    }
    (performances, excluded)
}

/// How users (or annotations, or samples) are grouped for the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingKind {
    /// Users binned by their average disagreement rate.
    AdrBins,
    /// Annotations binned by the popularity of their label on the sample.
    PopularityBins,
    /// Samples binned by annotation ambiguity.
    AmbiguityBins,
    /// Users partitioned by one demographic attribute.
    DemographicPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingStrategy {
    pub kind: GroupingKind,
    /// Bin edges over [0, 1] for the bin kinds; ignored for demographics.
    pub bin_edges: Vec<f64>,
    /// Attribute name for [`GroupingKind::DemographicPartition`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

/// Five equal-width bins over [0, 1]. Fixed absolute edges keep scores
/// comparable across datasets.
pub fn default_bin_edges() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

impl GroupingStrategy {
    pub fn adr_bins(bin_edges: Vec<f64>) -> Result<Self> {
        validate_edges(&bin_edges)?;
        Ok(Self {
            kind: GroupingKind::AdrBins,
            bin_edges,
            attribute: None,
        })
    }

    pub fn popularity_bins(bin_edges: Vec<f64>) -> Result<Self> {
        validate_edges(&bin_edges)?;
        Ok(Self {
            kind: GroupingKind::PopularityBins,
            bin_edges,
            attribute: None,
        })
    }

    pub fn ambiguity_bins(bin_edges: Vec<f64>) -> Result<Self> {
        validate_edges(&bin_edges)?;
        Ok(Self {
            kind: GroupingKind::AmbiguityBins,
            bin_edges,
            attribute: None,
        })
    }

    pub fn demographic(attribute: &str) -> Self {
        Self {
            kind: GroupingKind::DemographicPartition,
            bin_edges: Vec::new(),
            attribute: Some(attribute.to_string()),
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            GroupingKind::AdrBins => format!("adr bins {:?}", self.bin_edges),
            GroupingKind::PopularityBins => format!("popularity bins {:?}", self.bin_edges),
            GroupingKind::AmbiguityBins => format!("ambiguity bins {:?}", self.bin_edges),
            GroupingKind::DemographicPartition => format!(
                "demographic partition on {}",
                self.attribute.as_deref().unwrap_or("?")
            ),
        }
    }
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(AuditError::Config("need at least two bin edges".into()));
    }
    if edges.first() != Some(&0.0) || edges.last() != Some(&1.0) {
        return Err(AuditError::Config("bin edges must span [0, 1]".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AuditError::Config(
            "bin edges must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Index of the right-open bin containing `value`; the last bin is closed.
pub fn bin_index(edges: &[f64], value: f64) -> usize {
    let n_bins = edges.len() - 1;
    for b in 0..n_bins {
        if value >= edges[b] && value < edges[b + 1] {
            return b;
        }
    }
    n_bins - 1 // value == 1.0 (or above, clamped)
}

/// Human-readable label for bin `b`.
pub fn bin_label(edges: &[f64], b: usize) -> String {
    let close = if b == edges.len() - 2 { ']' } else { ')' };
    format!("[{:.2}, {:.2}{close}", edges[b], edges[b + 1])
}

/// One group: its id, its members (annotator ids for user groupings,
/// sample ids for ambiguity bins, "sample/annotator" keys for popularity
/// bins) and the mean metric value, absent for empty groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub members: Vec<String>,
    pub n_members: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

/// Group means for one grouping strategy and one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedEvaluation {
    pub strategy: GroupingStrategy,
    pub metric: String,
    pub groups: Vec<GroupSummary>,
    /// Ids of groups that ended up empty and were excluded from scoring.
    pub empty_groups: Vec<String>,
}

impl GroupedEvaluation {
    pub fn non_empty_means(&self) -> Vec<f64> {
        self.groups.iter().filter_map(|g| g.mean).collect()
    }

    fn same_grouping(&self, other: &Self) -> bool {
        self.strategy == other.strategy
            && self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|(a, b)| a.group_id == b.group_id)
    }
}

/// Groups of users without values yet: (group id, member ids).
pub type GroupSkeleton = Vec<(String, Vec<String>)>;

/// Assign each profiled user to exactly one group.
///
/// ADR bins place user u in the bin containing adr(u); the demographic
/// partition creates one group per declared value plus "unknown". Profiles
/// must come from training-split annotations so grouping never peeks at
/// evaluation labels. Only user-level strategies are valid here.
pub fn group_users(
    profiles: &BTreeMap<String, AnnotatorProfile>,
    strategy: &GroupingStrategy,
    annotators: &[Annotator],
) -> Result<GroupSkeleton> {
    match strategy.kind {
        GroupingKind::AdrBins => {
            validate_edges(&strategy.bin_edges)?;
            let n_bins = strategy.bin_edges.len() - 1;
            let mut groups: Vec<(String, Vec<String>)> = (0..n_bins)
                .map(|b| (format!("adr {}", bin_label(&strategy.bin_edges, b)), Vec::new()))
                .collect();
            for (id, profile) in profiles {
                groups[bin_index(&strategy.bin_edges, profile.adr)]
                    .1
                    .push(id.clone());
            }
            Ok(groups)
        }
        GroupingKind::DemographicPartition => {
            let attribute = strategy
                .attribute
                .as_deref()
                .ok_or_else(|| AuditError::Config("demographic grouping needs an attribute".into()))?;
            // Values found on the annotators, in sorted order, plus unknown.
            let mut values: Vec<String> = annotators
                .iter()
                .filter_map(|a| {
                    a.demographics
                        .as_ref()
                        .and_then(|d| d.get(attribute))
                        .cloned()
                })
                .collect();
            values.sort();
            values.dedup();
            let mut groups: Vec<(String, Vec<String>)> = values
                .iter()
                .map(|v| (format!("{attribute}={v}"), Vec::new()))
                .collect();
            groups.push((format!("{attribute}=unknown"), Vec::new()));
            let value_of = |id: &str| -> Option<String> {
                annotators
                    .iter()
                    .find(|a| a.annotator_id == id)
                    .and_then(|a| a.demographics.as_ref())
                    .and_then(|d| d.get(attribute))
                    .cloned()
            };
            for id in profiles.keys() {
                let idx = match value_of(id) {
                    Some(v) => values.iter().position(|x| *x == v).expect("collected above"),
                    None => values.len(),
                };
                groups[idx].1.push(id.clone());
            }
            Ok(groups)
        }
        GroupingKind::PopularityBins | GroupingKind::AmbiguityBins => Err(AuditError::Config(
            format!("{:?} does not group users", strategy.kind),
        )),
    }
}

/// Fill a group skeleton with the mean of one metric over member users.
/// Members are sorted before summing so aggregation order is fixed.
pub fn grouped_evaluation(
    skeleton: &GroupSkeleton,
    per_user: &BTreeMap<String, PerUserPerformance>,
    strategy: &GroupingStrategy,
    metric: MetricKind,
) -> GroupedEvaluation {
    let mut groups = Vec::with_capacity(skeleton.len());
    let mut empty_groups = Vec::new();
    for (group_id, member_ids) in skeleton {
        let mut members: Vec<String> = member_ids
            .iter()
            .filter(|id| per_user.contains_key(*id))
            .cloned()
            .collect();
        members.sort();
        let mean = if members.is_empty() {
            empty_groups.push(group_id.clone());
            None
        } else {
            let sum: f64 = members
                .iter()
                .map(|id| per_user[id].metrics[metric.name()])
                .sum();
            Some(sum / members.len() as f64)
        };
        groups.push(GroupSummary {
            group_id: group_id.clone(),
            n_members: members.len(),
            members,
            mean,
        });
    }
    GroupedEvaluation {
        strategy: strategy.clone(),
        metric: metric.name().to_string(),
        groups,
        empty_groups,
    }
}

/// The audit's headline numbers for one or more metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditScore {
    /// Population standard deviation of the non-empty group means.
    pub unfairness: f64,
    /// Arithmetic mean of the non-empty group means.
    pub general_performance: f64,
    pub metrics: Vec<String>,
}

/// Population standard deviation; exactly 0 when all values are equal.
fn population_std(values: &[f64]) -> f64 {
    if values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Unfairness and general performance over the non-empty groups. Errors
/// with fewer than two non-empty groups: a dispersion over one group is
/// undefined. Means are sorted before summing so the score is exactly
/// invariant under group reordering.
pub fn unfairness_score(grouped: &GroupedEvaluation) -> Result<AuditScore> {
    let mut means = grouped.non_empty_means();
    means.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    if means.len() < 2 {
        return Err(AuditError::Eval(format!(
            "unfairness undefined: {} non-empty group(s) under {}",
            means.len(),
            grouped.strategy.describe()
        )));
    }
    Ok(AuditScore {
        unfairness: population_std(&means),
        general_performance: means.iter().sum::<f64>() / means.len() as f64,
        metrics: vec![grouped.metric.clone()],
    })
}

/// Combine per-metric scores over the same grouping by averaging the
/// unfairness values and the performance values.
pub fn multi_metric_score(evaluations: &[GroupedEvaluation]) -> Result<(AuditScore, Vec<AuditScore>)> {
    let Some(first) = evaluations.first() else {
        return Err(AuditError::Eval("no grouped evaluations".into()));
    };
    for other in &evaluations[1..] {
        if !first.same_grouping(other) {
            return Err(AuditError::Eval(format!(
                "mismatched groupings: {} vs {}",
                first.strategy.describe(),
                other.strategy.describe()
            )));
        }
    }
    let per_metric: Vec<AuditScore> = evaluations
        .iter()
        .map(unfairness_score)
        .collect::<Result<_>>()?;
    let n = per_metric.len() as f64;
    let combined = AuditScore {
        unfairness: per_metric.iter().map(|s| s.unfairness).sum::<f64>() / n,
        general_performance: per_metric
            .iter()
            .map(|s| s.general_performance)
            .sum::<f64>()
            / n,
        metrics: evaluations.iter().map(|e| e.metric.clone()).collect(),
    };
    Ok((combined, per_metric))
}

/// Metric per popularity bin: each scored annotation lands in the bin of
/// its label's popularity on its sample, taken from evaluation-set
/// histograms.
pub fn annotation_level_breakdown(
    scored: &[ScoredAnnotation],
    eval_stats: &BTreeMap<String, SampleStats>,
    edges: &[f64],
    metric: MetricKind,
    label_set: &[String],
) -> Result<GroupedEvaluation> {
    validate_edges(edges)?;
    breakdown_bins(scored, edges, GroupingKind::PopularityBins, metric, label_set, |s| {
        let stats = &eval_stats[&s.sample_id];
        (
            popularity(stats, &s.label),
            format!("{}/{}", s.sample_id, s.annotator_id),
        )
    })
}

/// Metric per ambiguity bin: each scored annotation lands in the bin of
/// its sample's ambiguity; members are the samples in the bin.
pub fn sample_level_breakdown(
    scored: &[ScoredAnnotation],
    eval_stats: &BTreeMap<String, SampleStats>,
    edges: &[f64],
    metric: MetricKind,
    label_set: &[String],
) -> Result<GroupedEvaluation> {
    validate_edges(edges)?;
    breakdown_bins(scored, edges, GroupingKind::AmbiguityBins, metric, label_set, |s| {
        let stats = &eval_stats[&s.sample_id];
        (stats.ambiguity, s.sample_id.clone())
    })
}

fn breakdown_bins<F>(
    scored: &[ScoredAnnotation],
    edges: &[f64],
    kind: GroupingKind,
    metric: MetricKind,
    label_set: &[String],
    key_of: F,
) -> Result<GroupedEvaluation>
where
    F: Fn(&ScoredAnnotation) -> (f64, String),
{
    let n_bins = edges.len() - 1;
    let prefix = match kind {
        GroupingKind::PopularityBins => "popularity",
        GroupingKind::AmbiguityBins => "ambiguity",
        _ => unreachable!("breakdowns are bin groupings"),
    };
    let mut members: Vec<Vec<String>> = vec![Vec::new(); n_bins];
    let mut binned: Vec<Vec<&ScoredAnnotation>> = vec![Vec::new(); n_bins];
    for s in scored {
        let (value, member) = key_of(s);
        let b = bin_index(edges, value);
        members[b].push(member);
        binned[b].push(s);
    }
    let mut groups = Vec::with_capacity(n_bins);
    let mut empty_groups = Vec::new();
    for b in 0..n_bins {
        let group_id = format!("{prefix} {}", bin_label(edges, b));
        let mut m = std::mem::take(&mut members[b]);
        m.sort();
        m.dedup();
        let mean = if binned[b].is_empty() {
            empty_groups.push(group_id.clone());
            None
        } else {
            Some(metric.evaluate(&binned[b], label_set))
        };
        groups.push(GroupSummary {
            group_id,
            n_members: m.len(),
            members: m,
            mean,
        });
    }
    let strategy = GroupingStrategy {
        kind,
        bin_edges: edges.to_vec(),
        attribute: None,
    };
    Ok(GroupedEvaluation {
        strategy,
        metric: metric.name().to_string(),
        groups,
        empty_groups,
    })
}

/// Convenience: profiles restricted to a dataset's annotators (used by
/// tests; the pipeline computes profiles on the training split).
pub fn profiles_for(dataset: &AnnotatedDataset) -> BTreeMap<String, AnnotatorProfile> {
    let stats = crate::stats::sample_stats(dataset.annotations(), dataset.label_set());
    crate::stats::compute_adr(dataset.annotations(), &stats)
}
