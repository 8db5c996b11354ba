//! Deterministic conversion of (sample, annotator) pairs into sparse
//! feature vectors: hashed bag-of-words for the text, one-hot blocks for
//! demographic attributes.
//!
//! The token hash is a seeded FNV-1a over the token bytes, so the same
//! input produces the same vector on every platform and every run. The text
//! block is L2-normalized to keep gradient scale comparable across sentence
//! lengths; demographic indicators keep weight 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Annotator;
use crate::error::{AuditError, Result};

/// Fixed hash seed. Changing it would silently re-bucket every audit, so it
/// is part of the serialized feature spec contract via `spec_hash`.
const HASH_SEED: u64 = 0x6f70_696e_6932_3031;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn hash_token(token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ HASH_SEED;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Layout of the feature space: hashed text buckets followed by one one-hot
/// block per demographic attribute (each with a trailing "unknown" slot).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of text hash buckets; must be a power of two.
    pub n_text_buckets: usize,
    /// Attribute name to ordered value list, in block order.
    pub demographic_vocab: BTreeMap<String, Vec<String>>,
    pub include_demographics: bool,
}

impl FeatureSpec {
    pub fn new(
        n_text_buckets: usize,
        demographic_vocab: BTreeMap<String, Vec<String>>,
        include_demographics: bool,
    ) -> Result<Self> {
        if n_text_buckets == 0 || !n_text_buckets.is_power_of_two() {
            return Err(AuditError::Config(format!(
                "n_text_buckets must be a power of two, got {n_text_buckets}"
            )));
        }
        Ok(Self {
            n_text_buckets,
            demographic_vocab,
            include_demographics,
        })
    }

    /// Total vector width: text buckets plus, when demographics are
    /// included, one slot per declared value plus one "unknown" slot per
    /// attribute.
    pub fn width(&self) -> usize {
        let demo = if self.include_demographics {
            self.demographic_vocab
                .values()
                .map(|values| values.len() + 1)
                .sum()
        } else {
            0
        };
        self.n_text_buckets + demo
    }

    /// Content hash of the spec, recorded next to serialized models so a
    /// replayed audit can verify it is featurizing the same way.
    pub fn spec_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(HASH_SEED.to_le_bytes());
        hasher.update(self.n_text_buckets.to_le_bytes());
        hasher.update([u8::from(self.include_demographics)]);
        for (attr, values) in &self.demographic_vocab {
            hasher.update(attr.as_bytes());
            hasher.update([0u8]);
            for v in values {
                hasher.update(v.as_bytes());
                hasher.update([1u8]);
            }
        }
        format!("sha256:{}", hex::encode(hasher.finalize()))
    }

    fn bucket(&self, token: &str) -> usize {
        (hash_token(token) as usize) & (self.n_text_buckets - 1)
    }
}

/// Sparse feature vector. Entries are sorted by index and indices are
/// unique; weights are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
    pub width: usize,
}

impl FeatureVector {
    pub fn zero(width: usize) -> Self {
        Self {
            entries: Vec::new(),
            width,
        }
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.entries
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, w)| w * w)
            .sum::<f64>()
            .sqrt()
    }
}

/// Lowercase and split on any non-alphanumeric codepoint, dropping empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Hash tokens into the text block with count weights, L2-normalized over
/// the text portion. Empty text yields a zero vector.
pub fn featurize_sample(text: &str, spec: &FeatureSpec) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokenize(text) {
        *counts.entry(spec.bucket(&token)).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|w| w * w).sum::<f64>().sqrt();
    let entries = if norm > 0.0 {
        counts.into_iter().map(|(i, w)| (i, w / norm)).collect()
    } else {
        Vec::new()
    };
    FeatureVector {
        entries,
        width: spec.width(),
    }
}

/// Text features plus a one-hot demographic block per attribute.
///
/// A missing demographics record, a missing attribute or an
/// out-of-vocabulary value all land in the attribute's "unknown" slot;
/// dropping the user instead would itself exclude an opinion.
pub fn featurize_pair(text: &str, annotator: &Annotator, spec: &FeatureSpec) -> FeatureVector {
    let mut vector = featurize_sample(text, spec);
    if !spec.include_demographics {
        return vector;
    }
    let mut offset = spec.n_text_buckets;
    for (attr, values) in &spec.demographic_vocab {
        let slot = annotator
            .demographics
            .as_ref()
            .and_then(|demo| demo.get(attr))
            .and_then(|value| values.iter().position(|v| v == value))
            .unwrap_or(values.len()); // trailing "unknown" slot
        vector.entries.push((offset + slot, 1.0));
        offset += values.len() + 1;
    }
    vector
}
