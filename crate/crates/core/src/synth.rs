//! Seeded generator of synthetic multi-annotator datasets with planted
//! opinion clusters, spammers and ambiguity structure.
//!
//! Sample text is pseudo-text: tokens deterministically encode whether the
//! sample is disputed or carries a clear label, so labeling rules stay
//! linearly learnable and audit outcomes are predictable. Disputed samples
//! get panels allocated proportionally to cluster weights (largest
//! remainder), which pins the minority share of each disputed sample's
//! annotations to the configured cluster weight. Clear samples draw their
//! panels uniformly.
//!
//! Everything is driven by one seeded stream in a fixed order: the same
//! config always yields the byte-identical dataset.

use std::collections::BTreeMap;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotation, Annotator, Sample};
use crate::error::{AuditError, Result};

/// One planted opinion cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Share of the non-spammer annotator population.
    pub weight: f64,
    /// The label this cluster gives every disputed sample. This is the
    /// cluster's labeling rule; on clear samples everybody follows the
    /// sample's label.
    pub stance: String,
    /// Probability that an emitted label flips to a uniformly random other
    /// label (annotator mistakes).
    #[serde(default)]
    pub noise_rate: f64,
    /// Demographic profile carried by adherent members.
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
    /// Fraction of members (exact, largest remainder) carrying the profile.
    #[serde(default = "default_adherence")]
    pub adherence: f64,
    /// Profile for non-adherent members; None draws each attribute
    /// uniformly from the vocabulary.
    #[serde(default)]
    pub fallback_demographics: Option<BTreeMap<String, String>>,
}

fn default_adherence() -> f64 {
    1.0
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_annotators: usize,
    pub annotators_per_sample: usize,
    pub labels: Vec<String>,
    #[serde(default)]
    pub demographic_vocab: BTreeMap<String, Vec<String>>,
    pub clusters: Vec<ClusterSpec>,
    #[serde(default)]
    pub spammer_count: usize,
    /// Fraction of samples on which clusters disagree by construction.
    pub fraction_ambiguous: f64,
    #[serde(default = "default_tokens_per_text")]
    pub tokens_per_text: usize,
    pub seed: u64,
}

fn default_tokens_per_text() -> usize {
    8
}

impl Default for SynthConfig {
    fn default() -> Self {
        let vocab = BTreeMap::from([
            (
                "age".to_string(),
                vec!["18-25".into(), "26-35".into(), "36-45".into(), "46-60".into(), "60+".into()],
            ),
            ("gender".to_string(), vec!["f".into(), "m".into(), "nb".into()]),
            (
                "education".to_string(),
                vec!["primary".into(), "secondary".into(), "tertiary".into()],
            ),
        ]);
        let majority_profile = BTreeMap::from([
            ("age".to_string(), "26-35".to_string()),
            ("gender".to_string(), "m".to_string()),
            ("education".to_string(), "secondary".to_string()),
        ]);
        let minority_profile = BTreeMap::from([
            ("age".to_string(), "18-25".to_string()),
            ("gender".to_string(), "f".to_string()),
            ("education".to_string(), "tertiary".to_string()),
        ]);
        Self {
            n_samples: 500,
            n_annotators: 50,
            annotators_per_sample: 10,
            labels: vec!["T".into(), "NT".into()],
            demographic_vocab: vocab,
            clusters: vec![
                ClusterSpec {
                    weight: 0.8,
                    stance: "T".into(),
                    noise_rate: 0.02,
                    demographics: majority_profile,
                    adherence: 1.0,
                    fallback_demographics: None,
                },
                ClusterSpec {
                    weight: 0.2,
                    stance: "NT".into(),
                    noise_rate: 0.02,
                    demographics: minority_profile,
                    adherence: 1.0,
                    fallback_demographics: None,
                },
            ],
            spammer_count: 0,
            // Matches the disagreement share observed in crowdsourced
            // binary toxicity corpora.
            fraction_ambiguous: 0.61,
            tokens_per_text: 8,
            seed: 42,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_annotators == 0 {
            return Err(AuditError::Config("need samples and annotators".into()));
        }
        if self.annotators_per_sample == 0 || self.annotators_per_sample > self.n_annotators {
            return Err(AuditError::Config(format!(
                "annotators_per_sample {} infeasible with {} annotators",
                self.annotators_per_sample, self.n_annotators
            )));
        }
        if self.labels.len() < 2 {
            return Err(AuditError::Config("need at least two labels".into()));
        }
        if self.clusters.is_empty() {
            return Err(AuditError::Config("need at least one cluster".into()));
        }
        let weight_sum: f64 = self.clusters.iter().map(|c| c.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(AuditError::Config(format!(
                "cluster weights sum to {weight_sum}, expected 1"
            )));
        }
        if self.spammer_count >= self.n_annotators {
            return Err(AuditError::Config(
                "spammer_count must leave at least one regular annotator".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.fraction_ambiguous) {
            return Err(AuditError::Config("fraction_ambiguous outside [0, 1]".into()));
        }
        if self.tokens_per_text == 0 {
            return Err(AuditError::Config("tokens_per_text must be positive".into()));
        }
        for (i, cluster) in self.clusters.iter().enumerate() {
            if !(0.0..=1.0).contains(&cluster.noise_rate)
                || !(0.0..=1.0).contains(&cluster.adherence)
                || cluster.weight < 0.0
            {
                return Err(AuditError::Config(format!("cluster {i} has a rate outside [0, 1]")));
            }
            if !self.labels.contains(&cluster.stance) {
                return Err(AuditError::Config(format!(
                    "cluster {i} stance {:?} is not a label",
                    cluster.stance
                )));
            }
            for profile in std::iter::once(&cluster.demographics)
                .chain(cluster.fallback_demographics.iter())
            {
                for (attr, value) in profile {
                    let known = self
                        .demographic_vocab
                        .get(attr)
                        .map(|values| values.contains(value))
                        .unwrap_or(false);
                    if !known {
                        return Err(AuditError::Config(format!(
                            "cluster {i} profile value {attr}={value} is not in the vocabulary"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn n_regular(&self) -> usize {
        self.n_annotators - self.spammer_count
    }

    /// Exact cluster sizes by largest remainder over the weights.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        proportional_allocation(
            &self.clusters.iter().map(|c| c.weight).collect::<Vec<_>>(),
            self.n_regular(),
        )
    }

    /// Exact count of disputed samples.
    pub fn n_disputed(&self) -> usize {
        (self.fraction_ambiguous * self.n_samples as f64).round() as usize
    }
}

/// Ground-truth side channel for tests: who belongs to which cluster and
/// what each annotation would have been without noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Annotator id to cluster index; None marks a spammer.
    pub cluster_of: BTreeMap<String, Option<usize>>,
    /// Which samples are disputed by construction.
    pub disputed_samples: Vec<String>,
    /// Noiseless intended labels, sorted by (sample, annotator).
    pub intended: Vec<IntendedLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntendedLabel {
    pub sample_id: String,
    pub annotator_id: String,
    pub label: String,
}

/// Largest-remainder allocation of `total` slots proportional to `shares`.
fn proportional_allocation(shares: &[f64], total: usize) -> Vec<usize> {
    let share_sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares
        .iter()
        .map(|s| s / share_sum * total as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..total - assigned {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

struct AnnotatorPlan {
    annotator: Annotator,
    /// None marks a spammer.
    cluster: Option<usize>,
}

/// Generate a dataset and its ground truth. Byte-identical for the same
/// config.
pub fn generate(config: &SynthConfig) -> Result<(AnnotatedDataset, SynthTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.labels.len();

    // Annotators: regular members grouped by cluster, spammers at the end.
    let sizes = config.cluster_sizes();
    let mut plans: Vec<AnnotatorPlan> = Vec::with_capacity(config.n_annotators);
    let uniform_demo = |rng: &mut ChaCha8Rng, vocab: &BTreeMap<String, Vec<String>>| {
        vocab
            .iter()
            .map(|(attr, values)| {
                let pick = values[rng.gen_range(0..values.len())].clone();
                (attr.clone(), pick)
            })
            .collect::<BTreeMap<String, String>>()
    };
    for (cluster_idx, (cluster, &size)) in config.clusters.iter().zip(&sizes).enumerate() {
        let n_adherent = (cluster.adherence * size as f64).round() as usize;
        for member in 0..size {
            let id = format!("a{:05}", plans.len());
            let demographics = if member < n_adherent {
                Some(cluster.demographics.clone())
            } else {
                match &cluster.fallback_demographics {
                    Some(profile) => Some(profile.clone()),
                    None => Some(uniform_demo(&mut rng, &config.demographic_vocab)),
                }
            };
            plans.push(AnnotatorPlan {
                annotator: Annotator {
                    annotator_id: id,
                    demographics: demographics.filter(|d| !d.is_empty()),
                },
                cluster: Some(cluster_idx),
            });
        }
    }
    for _ in 0..config.spammer_count {
        let id = format!("a{:05}", plans.len());
        let demographics = uniform_demo(&mut rng, &config.demographic_vocab);
        plans.push(AnnotatorPlan {
            annotator: Annotator {
                annotator_id: id,
                demographics: Some(demographics).filter(|d| !d.is_empty()),
            },
            cluster: None,
        });
    }

    // Pools for the disputed-panel allocation: one per cluster plus the
    // spammers. Pool members are annotator indices.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); config.clusters.len() + 1];
    for (idx, plan) in plans.iter().enumerate() {
        match plan.cluster {
            Some(c) => pools[c].push(idx),
            None => pools[config.clusters.len()].push(idx),
        }
    }
    let pool_shares: Vec<f64> = pools
        .iter()
        .map(|p| p.len() as f64 / config.n_annotators as f64)
        .collect();
    let mut panel_quota = proportional_allocation(&pool_shares, config.annotators_per_sample);
    // A pool cannot seat more members than it has; push overflow into the
    // largest pools with spare capacity.
    loop {
        let mut overflow = 0usize;
        for (quota, pool) in panel_quota.iter_mut().zip(&pools) {
            if *quota > pool.len() {
                overflow += *quota - pool.len();
                *quota = pool.len();
            }
        }
        if overflow == 0 {
            break;
        }
        let mut spare: Vec<usize> = (0..pools.len())
            .filter(|&p| panel_quota[p] < pools[p].len())
            .collect();
        spare.sort_by_key(|&p| std::cmp::Reverse(pools[p].len() - panel_quota[p]));
        for p in spare {
            let take = overflow.min(pools[p].len() - panel_quota[p]);
            panel_quota[p] += take;
            overflow -= take;
            if overflow == 0 {
                break;
            }
        }
    }

    let n_disputed = config.n_disputed();
    let signal_tokens = config.tokens_per_text - config.tokens_per_text / 4;
    let filler_tokens = config.tokens_per_text / 4;
    let token_slug = |label: &str| -> String {
        label
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect()
    };

    let mut samples = Vec::with_capacity(config.n_samples);
    let mut annotations = Vec::new();
    let mut intended = Vec::new();
    let mut disputed_samples = Vec::with_capacity(n_disputed);
    let mut clear_counter = 0usize;

    for i in 0..config.n_samples {
        let sample_id = format!("s{:05}", i);
        let disputed = i < n_disputed;
        let clear_label = if disputed {
            None
        } else {
            let label = config.labels[clear_counter % k].clone();
            clear_counter += 1;
            Some(label)
        };

        // Pseudo-text: signal tokens from the sample's pool, then filler.
        let mut tokens = Vec::with_capacity(config.tokens_per_text);
        let pool_name = match &clear_label {
            None => "amb".to_string(),
            Some(label) => format!("{}sig", token_slug(label)),
        };
        for _ in 0..signal_tokens {
            tokens.push(format!("{pool_name}{}", rng.gen_range(0..40)));
        }
        for _ in 0..filler_tokens {
            tokens.push(format!("fill{}", rng.gen_range(0..100)));
        }
        let text = tokens.join(" ");
        samples.push(Sample {
            sample_id: sample_id.clone(),
            text,
        });
        if disputed {
            disputed_samples.push(sample_id.clone());
        }

        // Panel selection.
        let mut panel: Vec<usize> = Vec::with_capacity(config.annotators_per_sample);
        if disputed {
            for (pool, &quota) in pools.iter().zip(&panel_quota) {
                if quota == 0 {
                    continue;
                }
                for pick in index_sample(&mut rng, pool.len(), quota) {
                    panel.push(pool[pick]);
                }
            }
        } else {
            for pick in index_sample(&mut rng, plans.len(), config.annotators_per_sample) {
                panel.push(pick);
            }
        }
        panel.sort_unstable();

        for &member in &panel {
            let plan = &plans[member];
            let annotator_id = plan.annotator.annotator_id.clone();
            let (intent, emitted) = match plan.cluster {
                None => {
                    let pick = config.labels[rng.gen_range(0..k)].clone();
                    (pick.clone(), pick)
                }
                Some(c) => {
                    let cluster = &config.clusters[c];
                    let intent = match &clear_label {
                        Some(label) => label.clone(),
                        None => cluster.stance.clone(),
                    };
                    let emitted = if cluster.noise_rate > 0.0 && rng.gen_bool(cluster.noise_rate) {
                        let others: Vec<&String> =
                            config.labels.iter().filter(|l| **l != intent).collect();
                        others[rng.gen_range(0..others.len())].clone()
                    } else {
                        intent.clone()
                    };
                    (intent, emitted)
                }
            };
            intended.push(IntendedLabel {
                sample_id: sample_id.clone(),
                annotator_id: annotator_id.clone(),
                label: intent,
            });
            annotations.push(Annotation {
                sample_id: sample_id.clone(),
                annotator_id,
                label: emitted,
            });
        }
    }

    let cluster_of = plans
        .iter()
        .map(|p| (p.annotator.annotator_id.clone(), p.cluster))
        .collect();
    let annotators = plans.into_iter().map(|p| p.annotator).collect();
    let dataset = AnnotatedDataset::new(
        config.labels.clone(),
        config.demographic_vocab.clone(),
        samples,
        annotators,
        annotations,
    )?;
    intended.sort_by(|a, b| {
        (a.sample_id.as_str(), a.annotator_id.as_str())
            .cmp(&(b.sample_id.as_str(), b.annotator_id.as_str()))
    });
    Ok((
        dataset,
        SynthTruth {
            cluster_of,
            disputed_samples,
            intended,
        },
    ))
}

/// Predicted distributions for a config, used to assert generator
/// correctness within tolerance. Closed forms assume the disputed-panel
/// quota allocation; spammer contributions to the majority vote are
/// neglected, which is accurate for small spammer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthExpectation {
    /// Expected ADR per cluster, in cluster order.
    pub per_cluster_adr: Vec<f64>,
    /// Expected leave-one-out quality per cluster.
    pub per_cluster_quality: Vec<f64>,
    /// Expected spammer quality: exactly 1/k.
    pub spammer_quality: f64,
    /// Expected ambiguity of a disputed sample (no-noise approximation).
    pub disputed_ambiguity: f64,
    /// Expected fraction of samples bearing any disagreement.
    pub disagreement_sample_fraction: f64,
}

pub fn expected_stats(config: &SynthConfig) -> Result<SynthExpectation> {
    config.validate()?;
    let k = config.labels.len() as f64;
    let aps = config.annotators_per_sample as f64;
    let f = config.n_disputed() as f64 / config.n_samples as f64;

    let sizes = config.cluster_sizes();
    let mut pool_shares: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 / config.n_annotators as f64)
        .collect();
    pool_shares.push(config.spammer_count as f64 / config.n_annotators as f64);
    let quota = proportional_allocation(&pool_shares, config.annotators_per_sample);

    // Deterministic part of the disputed-sample vote: spammers ignored.
    let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
    for (cluster, &q) in config.clusters.iter().zip(&quota) {
        *votes.entry(cluster.stance.as_str()).or_insert(0.0) += q as f64;
    }
    let mut majority_stance = config.labels[0].as_str();
    let mut top = -1.0;
    for label in &config.labels {
        let v = votes.get(label.as_str()).copied().unwrap_or(0.0);
        if v > top {
            majority_stance = label.as_str();
            top = v;
        }
    }

    let per_cluster_adr: Vec<f64> = config
        .clusters
        .iter()
        .map(|c| {
            let nu = c.noise_rate;
            let disagree_disputed = if c.stance == majority_stance {
                nu
            } else {
                (1.0 - nu) + nu * (k - 2.0) / (k - 1.0)
            };
            let disagree_clear = nu;
            f * disagree_disputed + (1.0 - f) * disagree_clear
        })
        .collect();

    // Pairwise label-match probabilities.
    let match_same_intent = |nu_a: f64, nu_b: f64| -> f64 {
        (1.0 - nu_a) * (1.0 - nu_b) + nu_a * nu_b / (k - 1.0)
    };
    let match_diff_intent = |nu_a: f64, nu_b: f64| -> f64 {
        (1.0 - nu_a) * nu_b / (k - 1.0)
            + nu_a * (1.0 - nu_b) / (k - 1.0)
            + nu_a * nu_b * (k - 2.0) / ((k - 1.0) * (k - 1.0))
    };

    let spam_share = config.spammer_count as f64 / config.n_annotators as f64;
    let per_cluster_quality: Vec<f64> = config
        .clusters
        .iter()
        .enumerate()
        .map(|(ci, cluster)| {
            let nu = cluster.noise_rate;
            // Disputed samples: co-annotator mix follows the panel quota
            // minus this member's own slot.
            let mut disputed_match = 0.0;
            for (cj, other) in config.clusters.iter().enumerate() {
                let mut count = quota[cj] as f64;
                if cj == ci {
                    count -= 1.0;
                }
                if count <= 0.0 {
                    continue;
                }
                let m = if other.stance == cluster.stance {
                    match_same_intent(nu, other.noise_rate)
                } else {
                    match_diff_intent(nu, other.noise_rate)
                };
                disputed_match += count / (aps - 1.0) * m;
            }
            disputed_match += quota[config.clusters.len()] as f64 / (aps - 1.0) / k;

            // Clear samples: everyone intends the sample label; co-annotator
            // mix follows population shares.
            let mut clear_match = 0.0;
            for (cj, other) in config.clusters.iter().enumerate() {
                clear_match += pool_shares[cj] * match_same_intent(nu, other.noise_rate);
            }
            clear_match += spam_share / k;

            f * disputed_match + (1.0 - f) * clear_match
        })
        .collect();

    let disputed_ambiguity = if top >= 0.0 && aps > 0.0 {
        // Expected votes landing on the majority stance: members of each
        // cluster keep or flip onto it, spammers spread uniformly.
        let mut majority_votes = quota[config.clusters.len()] as f64 / k;
        for (cluster, &q) in config.clusters.iter().zip(&quota) {
            let p = if cluster.stance == majority_stance {
                1.0 - cluster.noise_rate
            } else {
                cluster.noise_rate / (k - 1.0)
            };
            majority_votes += q as f64 * p;
        }
        (k / (k - 1.0)) * (1.0 - majority_votes / aps)
    } else {
        0.0
    };

    // A disputed sample bears disagreement when at least two different
    // stances are seated (or spammers are present).
    let seated_stances: std::collections::BTreeSet<&str> = config
        .clusters
        .iter()
        .zip(&quota)
        .filter(|(_, &q)| q > 0)
        .map(|(c, _)| c.stance.as_str())
        .collect();
    let disputed_disagrees = seated_stances.len() > 1 || quota[config.clusters.len()] > 0;
    let mean_noise: f64 = config
        .clusters
        .iter()
        .zip(&pool_shares)
        .map(|(c, share)| c.noise_rate * share)
        .sum();
    let clear_unanimous_prob =
        ((1.0 - mean_noise) * (1.0 - spam_share) + spam_share / k).powf(aps);
    let disagreement_sample_fraction =
        f * f64::from(disputed_disagrees) + (1.0 - f) * (1.0 - clear_unanimous_prob);

    Ok(SynthExpectation {
        per_cluster_adr,
        per_cluster_quality,
        spammer_quality: 1.0 / k,
        disputed_ambiguity,
        disagreement_sample_fraction,
    })
}
