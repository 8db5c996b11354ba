//! Domain model for multi-annotator datasets.
//!
//! A dataset keeps every individual annotation instead of an aggregated
//! label per sample. Validation is strict: duplicate annotations, dangling
//! references, unknown labels and out-of-vocabulary demographic values are
//! rejected at construction time, so every downstream statistic works on
//! data that is known to be consistent.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AuditError, Result};

/// One item to classify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub text: String,
}

/// One person who labels samples. Demographic attributes are optional and
/// categorical; the attribute names and value vocabularies are declared in
/// the dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<BTreeMap<String, String>>,
}

/// One label given by one annotator to one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample_id: String,
    pub annotator_id: String,
    pub label: String,
}

/// An immutable, validated multi-annotator dataset.
///
/// Immutability is the concurrency contract: once built, a dataset can be
/// shared freely across threads and every statistic is a pure function of
/// it. Persistence goes through the JSONL/CSV formats in [`crate::ingest`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDataset {
    label_set: Vec<String>,
    demographic_vocab: BTreeMap<String, Vec<String>>,
    samples: Vec<Sample>,
    annotators: Vec<Annotator>,
    annotations: Vec<Annotation>,
    sample_index: HashMap<String, usize>,
    annotator_index: HashMap<String, usize>,
}

impl AnnotatedDataset {
    /// Build a dataset, checking every invariant:
    ///
    /// - non-empty label set with unique labels,
    /// - unique sample ids, non-empty sample text,
    /// - unique annotator ids, demographic values drawn from the vocabulary,
    /// - at most one annotation per (sample, annotator) pair,
    /// - annotation labels drawn from the label set,
    /// - every annotation references an existing sample and annotator,
    /// - every sample carries at least one annotation.
    pub fn new(
        label_set: Vec<String>,
        demographic_vocab: BTreeMap<String, Vec<String>>,
        samples: Vec<Sample>,
        annotators: Vec<Annotator>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if label_set.is_empty() {
            return Err(AuditError::Schema("empty label set".into()));
        }
        let labels: HashSet<&str> = label_set.iter().map(|s| s.as_str()).collect();
        if labels.len() != label_set.len() {
            return Err(AuditError::Schema("duplicate label in label set".into()));
        }

        let mut sample_index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.text.is_empty() {
                return Err(AuditError::Schema(format!(
                    "sample {} has empty text",
                    s.sample_id
                )));
            }
            if sample_index.insert(s.sample_id.clone(), i).is_some() {
                return Err(AuditError::Schema(format!(
                    "duplicate sample_id {}",
                    s.sample_id
                )));
            }
        }

        let mut annotator_index = HashMap::with_capacity(annotators.len());
        for (i, a) in annotators.iter().enumerate() {
            if annotator_index.insert(a.annotator_id.clone(), i).is_some() {
                return Err(AuditError::Schema(format!(
                    "duplicate annotator_id {}",
                    a.annotator_id
                )));
            }
            if let Some(demo) = &a.demographics {
                for (attr, value) in demo {
                    let vocab = demographic_vocab.get(attr).ok_or_else(|| {
                        AuditError::Schema(format!(
                            "annotator {} has undeclared demographic attribute {attr}",
                            a.annotator_id
                        ))
                    })?;
                    if !vocab.contains(value) {
                        return Err(AuditError::Schema(format!(
                            "annotator {} has value {value:?} outside the vocabulary of {attr}",
                            a.annotator_id
                        )));
                    }
                }
            }
        }

        let mut seen_pairs = HashSet::with_capacity(annotations.len());
        let mut annotated_samples = HashSet::with_capacity(samples.len());
        for ann in &annotations {
            if !sample_index.contains_key(&ann.sample_id) {
                return Err(AuditError::Schema(format!(
                    "annotation references unknown sample {}",
                    ann.sample_id
                )));
            }
            if !annotator_index.contains_key(&ann.annotator_id) {
                return Err(AuditError::Schema(format!(
                    "annotation references unknown annotator {}",
                    ann.annotator_id
                )));
            }
            if !labels.contains(ann.label.as_str()) {
                return Err(AuditError::Schema(format!(
                    "label {:?} on ({}, {}) is not in the declared label set",
                    ann.label, ann.sample_id, ann.annotator_id
                )));
            }
            if !seen_pairs.insert((ann.sample_id.clone(), ann.annotator_id.clone())) {
                return Err(AuditError::Schema(format!(
                    "duplicate annotation for (sample {}, annotator {})",
                    ann.sample_id, ann.annotator_id
                )));
            }
            annotated_samples.insert(ann.sample_id.as_str());
        }
        for s in &samples {
            if !annotated_samples.contains(s.sample_id.as_str()) {
                return Err(AuditError::Schema(format!(
                    "sample {} has no annotations",
                    s.sample_id
                )));
            }
        }

        Ok(Self {
            label_set,
            demographic_vocab,
            samples,
            annotators,
            annotations,
            sample_index,
            annotator_index,
        })
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn demographic_vocab(&self) -> &BTreeMap<String, Vec<String>> {
        &self.demographic_vocab
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn annotators(&self) -> &[Annotator] {
        &self.annotators
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn sample(&self, sample_id: &str) -> Option<&Sample> {
        self.sample_index.get(sample_id).map(|&i| &self.samples[i])
    }

    pub fn annotator(&self, annotator_id: &str) -> Option<&Annotator> {
        self.annotator_index
            .get(annotator_id)
            .map(|&i| &self.annotators[i])
    }

    /// Index of a label in the declared label set.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Content hash over the canonically sorted annotation triples.
    /// Identifies the annotation content of a dataset without storing it.
    pub fn fingerprint(&self) -> String {
        let mut triples: Vec<(&str, &str, &str)> = self
            .annotations
            .iter()
            .map(|a| {
                (
                    a.sample_id.as_str(),
                    a.annotator_id.as_str(),
                    a.label.as_str(),
                )
            })
            .collect();
        triples.sort_unstable();
        let mut hasher = Sha256::new();
        for (s, a, l) in triples {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
            hasher.update(a.as_bytes());
            hasher.update([0u8]);
            hasher.update(l.as_bytes());
            hasher.update([0xffu8]);
        }
        format!("sha256:{}", hex::encode(hasher.finalize()))
    }

}
