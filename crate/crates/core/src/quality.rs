//! Disagreement-based annotator quality scoring and filtering.
//!
//! The score of an annotator is their mean leave-one-out agreement: for each
//! of their annotations, the fraction of the sample's other annotators who
//! chose the same label. For single-choice labels this is what the full
//! CrowdTruth worker metric reduces to. A uniform spammer converges to 1/k
//! for k labels, while a consistent minority keeps at least its co-annotation
//! rate with its own cluster, which is what lets filtering separate spam from
//! unpopular opinion.
//!
//! Filtering defaults to off (threshold 0.0): dropping opinions is exactly
//! the failure mode this tool audits for, so it never happens silently.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::AnnotatedDataset;
use crate::error::{AuditError, Result};
use crate::stats::sample_stats;

/// Leave-one-out agreement score for one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub annotator_id: String,
    /// Mean leave-one-out agreement, in [0, 1].
    pub score: f64,
    /// Number of annotations on samples with at least one co-annotator.
    pub n_scored_samples: usize,
}

/// Score every annotator by mean leave-one-out agreement.
///
/// Annotations on samples where the annotator is alone are skipped; an
/// annotator with no scorable annotation is omitted from the output.
pub fn annotator_quality(dataset: &AnnotatedDataset) -> BTreeMap<String, QualityScore> {
    let stats = sample_stats(dataset.annotations(), dataset.label_set());
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for ann in dataset.annotations() {
        let s = &stats[&ann.sample_id];
        if s.n_annotations < 2 {
            continue;
        }
        // Fraction of the *other* annotators who chose the same label.
        let same_others = s.count(&ann.label) - 1;
        let agreement = same_others as f64 / (s.n_annotations - 1) as f64;
        let entry = sums.entry(ann.annotator_id.as_str()).or_insert((0.0, 0));
        entry.0 += agreement;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(id, (sum, n))| {
            (
                id.to_string(),
                QualityScore {
                    annotator_id: id.to_string(),
                    score: sum / n as f64,
                    n_scored_samples: n,
                },
            )
        })
        .collect()
}

/// Remove all annotations by annotators scoring below `threshold`.
///
/// Annotators without a score (no co-annotated sample) are kept. Samples
/// left without annotations are dropped. The input dataset is untouched;
/// an error is raised if filtering would remove every annotator.
pub fn filter_annotators(
    dataset: &AnnotatedDataset,
    scores: &BTreeMap<String, QualityScore>,
    threshold: f64,
) -> Result<AnnotatedDataset> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AuditError::Config(format!(
            "quality threshold {threshold} outside [0, 1]"
        )));
    }
    let keep = |annotator_id: &str| -> bool {
        match scores.get(annotator_id) {
            Some(q) => q.score >= threshold,
            None => true,
        }
    };

    let annotations: Vec<_> = dataset
        .annotations()
        .iter()
        .filter(|a| keep(&a.annotator_id))
        .cloned()
        .collect();
    if annotations.is_empty() {
        return Err(AuditError::Eval(format!(
            "quality threshold {threshold} removes every annotator"
        )));
    }
    let annotators: Vec<_> = dataset
        .annotators()
        .iter()
        .filter(|a| keep(&a.annotator_id))
        .cloned()
        .collect();
    let kept_samples: std::collections::HashSet<&str> =
        annotations.iter().map(|a| a.sample_id.as_str()).collect();
    let samples: Vec<_> = dataset
        .samples()
        .iter()
        .filter(|s| kept_samples.contains(s.sample_id.as_str()))
        .cloned()
        .collect();

    AnnotatedDataset::new(
        dataset.label_set().to_vec(),
        dataset.demographic_vocab().clone(),
        samples,
        annotators,
        annotations,
    )
}
