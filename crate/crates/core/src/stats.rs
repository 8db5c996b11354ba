//! Disagreement statistics: majority vote, ambiguity, popularity and the
//! per-annotator average disagreement rate (ADR).
//!
//! The core functions take a raw annotation slice plus the declared label
//! set, so the same code serves validated datasets, split subsets and the
//! duplication-invariance checks in the test suite. Ties in the majority
//! vote are broken deterministically by label order in the label set; the
//! `is_tie` flag preserves the information that a tie happened.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotation};

/// Per-sample annotation histogram and derived statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub sample_id: String,
    /// Label to count, over the declared label set order.
    pub label_histogram: BTreeMap<String, usize>,
    pub majority_label: String,
    pub is_tie: bool,
    /// 0 for a unanimous sample, 1 for a maximum-entropy histogram.
    pub ambiguity: f64,
    pub n_annotations: usize,
}

impl SampleStats {
    pub fn count(&self, label: &str) -> usize {
        self.label_histogram.get(label).copied().unwrap_or(0)
    }
}

/// Per-annotator disagreement profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    pub n_annotations: usize,
    /// Fraction of this annotator's labels that differ from the sample's
    /// majority label.
    pub adr: f64,
}

/// Majority-complement disagreement, rescaled so the maximum-entropy
/// histogram over `n_labels` labels maps to 1.
pub fn ambiguity(majority_count: usize, total: usize, n_labels: usize) -> f64 {
    if total == 0 || n_labels < 2 {
        return 0.0;
    }
    let k = n_labels as f64;
    (k / (k - 1.0)) * (1.0 - majority_count as f64 / total as f64)
}

/// Fraction of a sample's annotations that share the given label.
pub fn popularity(stats: &SampleStats, label: &str) -> f64 {
    if stats.n_annotations == 0 {
        return 0.0;
    }
    stats.count(label) as f64 / stats.n_annotations as f64
}

/// Compute per-sample statistics from a raw annotation slice.
///
/// Samples are keyed by `sample_id`; only samples present in the slice
/// appear in the output. `label_set` supplies the deterministic tie-break
/// order and the label count for the ambiguity rescale.
pub fn sample_stats(annotations: &[Annotation], label_set: &[String]) -> BTreeMap<String, SampleStats> {
    let mut histograms: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for ann in annotations {
        *histograms
            .entry(ann.sample_id.as_str())
            .or_default()
            .entry(ann.label.as_str())
            .or_insert(0) += 1;
    }

    let mut out = BTreeMap::new();
    for (sample_id, hist) in histograms {
        let total: usize = hist.values().sum();
        // Scan in label_set order so the first label with the top count wins.
        let mut majority = "";
        let mut top = 0usize;
        let mut is_tie = false;
        for label in label_set {
            let count = hist.get(label.as_str()).copied().unwrap_or(0);
            if count > top {
                majority = label.as_str();
                top = count;
                is_tie = false;
            } else if count == top && count > 0 {
                is_tie = true;
            }
        }
        out.insert(
            sample_id.to_string(),
            SampleStats {
                sample_id: sample_id.to_string(),
                label_histogram: hist
                    .into_iter()
                    .map(|(l, c)| (l.to_string(), c))
                    .collect(),
                majority_label: majority.to_string(),
                is_tie,
                ambiguity: ambiguity(top, total, label_set.len()),
                n_annotations: total,
            },
        );
    }
    out
}

/// Majority vote over a whole dataset.
pub fn majority_vote(dataset: &AnnotatedDataset) -> BTreeMap<String, SampleStats> {
    sample_stats(dataset.annotations(), dataset.label_set())
}

/// Average disagreement rate per annotator: the fraction of their
/// annotations whose label differs from the sample's majority label.
/// Tie samples count as agreement exactly when the annotator's label equals
/// the deterministically broken majority label. Annotators with zero
/// annotations in the slice do not appear in the output.
pub fn compute_adr(
    annotations: &[Annotation],
    stats: &BTreeMap<String, SampleStats>,
) -> BTreeMap<String, AnnotatorProfile> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // (disagreements, total)
    for ann in annotations {
        let s = stats
            .get(&ann.sample_id)
            .expect("stats computed from the same annotations");
        let entry = counts.entry(ann.annotator_id.as_str()).or_insert((0, 0));
        if ann.label != s.majority_label {
            entry.0 += 1;
        }
        entry.1 += 1;
    }
    counts
        .into_iter()
        .map(|(id, (dis, total))| {
            (
                id.to_string(),
                AnnotatorProfile {
                    annotator_id: id.to_string(),
                    n_annotations: total,
                    adr: dis as f64 / total as f64,
                },
            )
        })
        .collect()
}

/// Fraction of annotations that lie on tied samples. Reported as a warning
/// when it exceeds 1%, since the tie-break convention then has a visible
/// effect on ADR.
pub fn tie_annotation_fraction(stats: &BTreeMap<String, SampleStats>) -> f64 {
    let total: usize = stats.values().map(|s| s.n_annotations).sum();
    if total == 0 {
        return 0.0;
    }
    let tied: usize = stats
        .values()
        .filter(|s| s.is_tie)
        .map(|s| s.n_annotations)
        .sum();
    tied as f64 / total as f64
}
