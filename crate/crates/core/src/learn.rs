//! Logistic-regression learner with seeded mini-batch gradient descent and
//! a k-fold cross-validation harness.
//!
//! Everything here is deterministic given the config seed: the epoch
//! shuffles, the fold plan and the resulting weights. L2 regularization is
//! applied through a lazily maintained scale factor so each batch stays
//! proportional to the number of active features rather than the full
//! (possibly 2^18-wide) weight vector; the update trajectory is identical
//! to applying the decay to every weight each batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::featurize::FeatureVector;

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative full-data loss change under which training stops early.
    pub tolerance: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            learning_rate: 0.1,
            max_epochs: 100,
            tolerance: 1e-6,
            seed: 42,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.l2_lambda < 0.0 {
            return Err(AuditError::Config("l2_lambda must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(AuditError::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(AuditError::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.learning_rate * self.l2_lambda >= 1.0 {
            return Err(AuditError::Config(
                "learning_rate * l2_lambda must be < 1".into(),
            ));
        }
        Ok(())
    }
}

/// A trained multinomial logistic-regression model. For two labels this is
/// an over-parameterized sigmoid; probabilities and argmax behave the same.
#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub label_set: Vec<String>,
    pub width: usize,
    /// Per-class weight vectors, dense, length `width`.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LrModel {
    /// All-zero model; predicts the uniform distribution everywhere.
    pub fn zero(label_set: Vec<String>, width: usize) -> Self {
        let classes = label_set.len();
        Self {
            label_set,
            width,
            weights: vec![vec![0.0; width]; classes],
            bias: vec![0.0; classes],
        }
    }

    /// Build a model from explicit weights. Used by tests that need an
    /// exactly known decision function.
    pub fn from_weights(label_set: Vec<String>, weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != label_set.len() || bias.len() != label_set.len() {
            return Err(AuditError::Config("class count mismatch".into()));
        }
        let width = weights.first().map(|w| w.len()).unwrap_or(0);
        if weights.iter().any(|w| w.len() != width) {
            return Err(AuditError::Config("ragged weight matrix".into()));
        }
        if weights.iter().flatten().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(AuditError::Config("non-finite weight".into()));
        }
        Ok(Self { label_set, width, weights, bias })
    }

    pub fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Squared L2 norm of the weight matrix (bias excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum()
    }

    fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (c, row) in self.weights.iter().enumerate() {
            for &(i, w) in &x.entries {
                z[c] += row[i] * w;
            }
        }
        z
    }

    /// Class probabilities and the argmax label index. Ties break toward
    /// the earlier label in the label set.
    pub fn predict(&self, x: &FeatureVector) -> Result<(usize, Vec<f64>)> {
        if x.width != self.width {
            return Err(AuditError::Eval(format!(
                "feature width {} does not match model width {}",
                x.width, self.width
            )));
        }
        let z = self.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let probabilities: Vec<f64> = exp.iter().map(|e| e / sum).collect();
        let mut best = 0;
        for (c, p) in probabilities.iter().enumerate() {
            if *p > probabilities[best] {
                best = c;
            }
        }
        Ok((best, probabilities))
    }

    pub fn predict_label(&self, x: &FeatureVector) -> Result<&str> {
        let (idx, _) = self.predict(x)?;
        Ok(&self.label_set[idx])
    }
}

/// Serialized model record: versioned, JSON-safe, sparse weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub format_version: u32,
    pub label_set: Vec<String>,
    pub spec_hash: String,
    pub width: usize,
    /// Per class, the nonzero (index, value) weight pairs.
    pub weights: Vec<Vec<(usize, f64)>>,
    pub bias: Vec<f64>,
}

impl LrModel {
    pub fn to_record(&self, spec_hash: &str) -> ModelRecord {
        ModelRecord {
            format_version: 1,
            label_set: self.label_set.clone(),
            spec_hash: spec_hash.to_string(),
            width: self.width,
            weights: self
                .weights
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(|(i, w)| (i, *w))
                        .collect()
                })
                .collect(),
            bias: self.bias.clone(),
        }
    }

    pub fn from_record(record: &ModelRecord) -> Result<Self> {
        if record.format_version != 1 {
            return Err(AuditError::Config(format!(
                "unsupported model format version {}",
                record.format_version
            )));
        }
        let mut weights = vec![vec![0.0; record.width]; record.label_set.len()];
        for (c, row) in record.weights.iter().enumerate() {
            for &(i, w) in row {
                if i >= record.width {
                    return Err(AuditError::Config("weight index out of range".into()));
                }
                weights[c][i] = w;
            }
        }
        Self::from_weights(record.label_set.clone(), weights, record.bias.clone())
    }
}

fn check_examples(examples: &[(FeatureVector, usize)], n_classes: usize) -> Result<usize> {
    let Some(width) = examples.first().map(|(x, _)| x.width) else {
        return Err(AuditError::Train("no training examples".into()));
    };
    let mut class_seen = vec![false; n_classes];
    for (x, y) in examples {
        if x.width != width {
            return Err(AuditError::Train("inconsistent feature widths".into()));
        }
        if *y >= n_classes {
            return Err(AuditError::Train(format!("label index {y} out of range")));
        }
        class_seen[*y] = true;
    }
    if let Some(missing) = class_seen.iter().position(|seen| !seen) {
        return Err(AuditError::Train(format!(
            "class {missing} is absent from the training data"
        )));
    }
    Ok(width)
}

/// Regularized mean negative log-likelihood of the examples under the model.
pub fn regularized_loss(model: &LrModel, examples: &[(FeatureVector, usize)], l2_lambda: f64) -> f64 {
    let mut nll = 0.0;
    for (x, y) in examples {
        let z = model.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        nll += log_sum - z[*y];
    }
    nll / examples.len() as f64 + 0.5 * l2_lambda * model.weight_norm_sq()
}

/// Analytic gradient of [`regularized_loss`] in the same layout as the
/// model parameters: per-class weight rows plus per-class bias.
pub fn loss_gradient(
    model: &LrModel,
    examples: &[(FeatureVector, usize)],
    l2_lambda: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let classes = model.n_classes();
    let mut grad_w = vec![vec![0.0; model.width]; classes];
    let mut grad_b = vec![0.0; classes];
    let scale = 1.0 / examples.len() as f64;
    for (x, y) in examples {
        let (_, probabilities) = model.predict(x).expect("width checked");
        for c in 0..classes {
            let residual = probabilities[c] - f64::from(c == *y);
            grad_b[c] += scale * residual;
            for &(i, w) in &x.entries {
                grad_w[c][i] += scale * residual * w;
            }
        }
    }
    for (c, row) in grad_w.iter_mut().enumerate() {
        for (i, g) in row.iter_mut().enumerate() {
            *g += l2_lambda * model.weights[c][i];
        }
    }
    (grad_w, grad_b)
}

/// Train and also return the per-epoch full-data loss trace.
pub fn train_traced(
    examples: &[(FeatureVector, usize)],
    label_set: &[String],
    config: &TrainConfig,
) -> Result<(LrModel, Vec<f64>)> {
    config.validate()?;
    let classes = label_set.len();
    let width = check_examples(examples, classes)?;

    let mut stored = vec![vec![0.0; width]; classes];
    let mut bias = vec![0.0; classes];
    let mut scale = 1.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let decay = 1.0 - config.learning_rate * config.l2_lambda;

    let loss_of = |stored: &[Vec<f64>], bias: &[f64], scale: f64| -> f64 {
        let weights: Vec<Vec<f64>> = stored
            .iter()
            .map(|row| row.iter().map(|v| v * scale).collect())
            .collect();
        let model = LrModel {
            label_set: label_set.to_vec(),
            width,
            weights,
            bias: bias.to_vec(),
        };
        regularized_loss(&model, examples, config.l2_lambda)
    };

    let mut trace = Vec::with_capacity(config.max_epochs + 1);
    trace.push(loss_of(&stored, &bias, scale));

    let mut z = vec![0.0; classes];
    for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            // Gradient of the batch data term at the current parameters.
            let batch_scale = 1.0 / batch.len() as f64;
            let mut updates: Vec<(usize, usize, f64)> = Vec::new(); // (class, index, grad)
            let mut bias_grad = vec![0.0; classes];
            for &idx in batch {
                let (x, y) = &examples[idx];
                for (c, zc) in z.iter_mut().enumerate() {
                    *zc = bias[c];
                    for &(i, w) in &x.entries {
                        *zc += scale * stored[c][i] * w;
                    }
                }
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for zc in z.iter_mut() {
                    *zc = (*zc - max).exp();
                    sum += *zc;
                }
                for c in 0..classes {
                    let residual = z[c] / sum - f64::from(c == *y);
                    bias_grad[c] += batch_scale * residual;
                    for &(i, w) in &x.entries {
                        updates.push((c, i, batch_scale * residual * w));
                    }
                }
            }
            // Weight decay folds into the scale; the data step lands on the
            // stored (unscaled) weights afterwards.
            scale *= decay;
            for (c, i, g) in updates {
                stored[c][i] -= config.learning_rate * g / scale;
            }
            for c in 0..classes {
                bias[c] -= config.learning_rate * bias_grad[c];
            }
            if scale < 1e-9 {
                for row in stored.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                scale = 1.0;
            }
        }

        let loss = loss_of(&stored, &bias, scale);
        if !loss.is_finite() {
            return Err(AuditError::Train(format!("non-finite loss {loss}")));
        }
        let prev = *trace.last().expect("trace seeded with initial loss");
        trace.push(loss);
        if (prev - loss).abs() / prev.abs().max(1e-12) < config.tolerance {
            break;
        }
    }

    let weights: Vec<Vec<f64>> = stored
        .iter()
        .map(|row| row.iter().map(|v| v * scale).collect())
        .collect();
    Ok((
        LrModel {
            label_set: label_set.to_vec(),
            width,
            weights,
            bias,
        },
        trace,
    ))
}

/// Minimize the L2-regularized negative log-likelihood with seeded
/// mini-batch gradient descent. Errors when a class is absent from the
/// training data or the loss turns non-finite.
pub fn train(
    examples: &[(FeatureVector, usize)],
    label_set: &[String],
    config: &TrainConfig,
) -> Result<LrModel> {
    train_traced(examples, label_set, config).map(|(model, _)| model)
}

/// Compare the analytic gradient against central finite differences of the
/// loss, returning the maximum relative error over all parameters. Intended
/// for small problems (few examples, narrow feature space).
pub fn grad_check(
    model: &LrModel,
    examples: &[(FeatureVector, usize)],
    l2_lambda: f64,
    epsilon: f64,
) -> f64 {
    let (grad_w, grad_b) = loss_gradient(model, examples, l2_lambda);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, plus: f64, minus: f64| {
        let fd = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic - fd).abs() / (analytic.abs() + fd.abs()).max(1e-4);
        if rel > worst {
            worst = rel;
        }
    };
    for c in 0..model.n_classes() {
        for (i, &analytic) in grad_w[c].iter().enumerate() {
            let original = probe.weights[c][i];
            probe.weights[c][i] = original + epsilon;
            let plus = regularized_loss(&probe, examples, l2_lambda);
            probe.weights[c][i] = original - epsilon;
            let minus = regularized_loss(&probe, examples, l2_lambda);
            probe.weights[c][i] = original;
            check(analytic, plus, minus);
        }
        let original = probe.bias[c];
        probe.bias[c] = original + epsilon;
        let plus = regularized_loss(&probe, examples, l2_lambda);
        probe.bias[c] = original - epsilon;
        let minus = regularized_loss(&probe, examples, l2_lambda);
        probe.bias[c] = original;
        check(grad_b[c], plus, minus);
    }
    worst
}

/// A k-fold split of `0..n`: folds are disjoint, cover every index and
/// differ in size by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Indices outside fold `held_out`, in plan order.
    pub fn training_indices(&self, held_out: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != held_out)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect()
    }

    /// Panics if the folds are not a disjoint cover with balanced sizes.
    pub fn assert_valid(&self, n: usize) {
        let mut seen = vec![false; n];
        for fold in &self.folds {
            for &i in fold {
                assert!(!seen[i], "index {i} appears in two folds");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|s| *s), "folds do not cover all indices");
        let sizes: Vec<usize> = self.folds.iter().map(|f| f.len()).collect();
        let min = sizes.iter().min().unwrap();
        let max = sizes.iter().max().unwrap();
        assert!(max - min <= 1, "fold sizes {sizes:?} differ by more than one");
    }
}

/// Seeded shuffle of `0..n` followed by a contiguous split into `k` folds;
/// the first `n % k` folds take the extra element.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || n < k {
        return Err(AuditError::Config(format!(
            "cannot split {n} items into {k} folds"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(FoldPlan { k, folds })
}

/// Per-fold held-out scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

/// k-fold cross-validation: train on k-1 folds, score the held-out fold
/// with `metric(predicted, actual)`. Folds train in parallel; the result is
/// independent of scheduling order.
pub fn cross_validate<F>(
    examples: &[(FeatureVector, usize)],
    label_set: &[String],
    config: &TrainConfig,
    k: usize,
    metric: F,
) -> Result<CvOutcome>
where
    F: Fn(&[usize], &[usize]) -> f64 + Sync,
{
    let plan = make_folds(examples.len(), k, config.seed)?;
    plan.assert_valid(examples.len());
    let fold_scores: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|held_out| -> Result<f64> {
            let train_set: Vec<(FeatureVector, usize)> = plan
                .training_indices(held_out)
                .into_iter()
                .map(|i| examples[i].clone())
                .collect();
            let model = train(&train_set, label_set, config)?;
            let mut predicted = Vec::with_capacity(plan.folds[held_out].len());
            let mut actual = Vec::with_capacity(plan.folds[held_out].len());
            for &i in &plan.folds[held_out] {
                let (x, y) = &examples[i];
                predicted.push(model.predict(x)?.0);
                actual.push(*y);
            }
            Ok(metric(&predicted, &actual))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = fold_scores.iter().sum::<f64>() / k as f64;
    Ok(CvOutcome { fold_scores, mean })
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    hits as f64 / predicted.len() as f64
}

/// Result of the l2_lambda grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best_lambda: f64,
    /// (lambda, mean fold score) per grid point, in grid order.
    pub trials: Vec<(f64, f64)>,
}

/// Default search grid for the regularization strength.
pub const LAMBDA_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Grid-search `l2_lambda` by mean cross-validated accuracy. Ties keep the
/// earlier grid entry.
pub fn tune_lambda(
    examples: &[(FeatureVector, usize)],
    label_set: &[String],
    base: &TrainConfig,
    grid: &[f64],
    k: usize,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(AuditError::Config("empty lambda grid".into()));
    }
    let mut trials = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let config = TrainConfig {
            l2_lambda: lambda,
            ..base.clone()
        };
        let outcome = cross_validate(examples, label_set, &config, k, accuracy)?;
        trials.push((lambda, outcome.mean));
    }
    let mut best = 0;
    for (i, (_, score)) in trials.iter().enumerate() {
        if *score > trials[best].1 {
            best = i;
        }
    }
    Ok(TuneOutcome {
        best_lambda: trials[best].0,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels() -> Vec<String> {
        vec!["T".into(), "NT".into()]
    }

    fn dense(width: usize, values: &[f64]) -> FeatureVector {
        FeatureVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
            width,
        }
    }

    /// Seeded two-blob problem: class 0 centered at +1, class 1 at -1 on
    /// feature 0, with a noisy second feature.
    fn blobs(n: usize, seed: u64) -> Vec<(FeatureVector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = i % 2;
                let center = if y == 0 { 1.0 } else { -1.0 };
                let x0 = center + rng.gen_range(-0.5..0.5);
                let x1 = rng.gen_range(-1.0..1.0);
                (dense(2, &[x0, x1]), y)
            })
            .collect()
    }

    #[test]
    fn separable_two_points_reach_full_accuracy() {
        let examples = vec![(dense(1, &[1.0]), 0), (dense(1, &[-1.0]), 1)];
        let config = TrainConfig {
            max_epochs: 200,
            batch_size: 2,
            ..Default::default()
        };
        let model = train(&examples, &labels(), &config).unwrap();
        for (x, y) in &examples {
            assert_eq!(model.predict(x).unwrap().0, *y);
        }
    }

    #[test]
    fn absent_class_is_an_error() {
        let examples = vec![(dense(1, &[1.0]), 0), (dense(1, &[0.5]), 0)];
        let err = train(&examples, &labels(), &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("absent"));
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let examples = blobs(200, 9);
        let config = TrainConfig {
            batch_size: 200, // full batch: plain gradient descent
            max_epochs: 100,
            tolerance: 0.0,
            ..Default::default()
        };
        let (_, trace) = train_traced(&examples, &labels(), &config).unwrap();
        assert!(trace.len() > 2);
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "loss increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn zero_model_predicts_uniform_and_first_label() {
        let model = LrModel::zero(labels(), 4);
        let (idx, p) = model.predict(&dense(4, &[0.3, 0.0, 0.1, 0.0])).unwrap();
        assert_eq!(idx, 0);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit_dominates() {
        let model =
            LrModel::from_weights(labels(), vec![vec![50.0], vec![0.0]], vec![0.0, 0.0]).unwrap();
        let (idx, p) = model.predict(&dense(1, &[1.0])).unwrap();
        assert_eq!(idx, 0);
        assert!(p[0] > 0.999);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let model = LrModel::zero(labels(), 4);
        assert!(model.predict(&dense(3, &[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for lambda in [0.0, 1e-3] {
            let examples: Vec<(FeatureVector, usize)> = (0..20)
                .map(|i| {
                    let values: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    (dense(5, &values), i % 2)
                })
                .collect();
            let mut model = LrModel::zero(labels(), 5);
            for row in model.weights.iter_mut() {
                for w in row.iter_mut() {
                    *w = rng.gen_range(-0.5..0.5);
                }
            }
            let err = grad_check(&model, &examples, lambda, 1e-5);
            assert!(err < 1e-5, "lambda={lambda}: max relative error {err}");
        }
    }

    #[test]
    fn single_example_gradient_is_residual_times_input() {
        // One example, one feature: d loss / d w_c = (p_c - y_c) * x.
        let x_value = 0.7;
        let examples = vec![(dense(1, &[x_value]), 0)];
        let model =
            LrModel::from_weights(labels(), vec![vec![0.3], vec![-0.2]], vec![0.0, 0.0]).unwrap();
        let (_, p) = model.predict(&examples[0].0).unwrap();
        let (grad_w, _) = loss_gradient(&model, &examples, 0.0);
        assert!((grad_w[0][0] - (p[0] - 1.0) * x_value).abs() < 1e-12);
        assert!((grad_w[1][0] - p[1] * x_value).abs() < 1e-12);
        assert!(grad_check(&model, &examples, 0.0, 1e-5) < 1e-5);
    }

    #[test]
    fn folds_have_balanced_sizes() {
        let plan = make_folds(10, 5, 1).unwrap();
        plan.assert_valid(10);
        assert!(plan.folds.iter().all(|f| f.len() == 2));

        let plan = make_folds(11, 5, 1).unwrap();
        plan.assert_valid(11);
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn fold_plan_is_seed_deterministic() {
        assert_eq!(make_folds(20, 5, 7).unwrap(), make_folds(20, 5, 7).unwrap());
        assert!(make_folds(3, 5, 7).is_err());
    }

    #[test]
    fn cv_on_learnable_data_is_perfect() {
        // Label is a deterministic function of feature 0.
        let examples: Vec<(FeatureVector, usize)> = (0..50)
            .map(|i| {
                let y = i % 2;
                (dense(1, &[if y == 0 { 1.0 } else { -1.0 }]), y)
            })
            .collect();
        let outcome =
            cross_validate(&examples, &labels(), &TrainConfig::default(), 5, accuracy).unwrap();
        assert_eq!(outcome.mean, 1.0);
        assert!(outcome.fold_scores.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let examples = blobs(100, 5);
        let config = TrainConfig::default();
        let a = train(&examples, &labels(), &config).unwrap();
        let b = train(&examples, &labels(), &config).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn stronger_regularization_never_grows_the_weights() {
        let examples = blobs(150, 13);
        let mut previous = f64::INFINITY;
        for lambda in [1e-4, 1e-3, 1e-2, 1e-1] {
            let config = TrainConfig {
                l2_lambda: lambda,
                ..Default::default()
            };
            let model = train(&examples, &labels(), &config).unwrap();
            let norm = model.weight_norm_sq().sqrt();
            assert!(
                norm <= previous + 1e-9,
                "lambda {lambda} grew the norm: {norm} > {previous}"
            );
            previous = norm;
        }
    }

    #[test]
    fn record_roundtrip_preserves_the_model() {
        let examples = blobs(60, 21);
        let model = train(&examples, &labels(), &TrainConfig::default()).unwrap();
        let record = model.to_record("sha256:spec");
        let json = serde_json::to_string(&record).unwrap();
        let back: ModelRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
        let restored = LrModel::from_record(&back).unwrap();
        assert_eq!(restored, model);
    }

    #[test]
    fn tune_picks_a_grid_lambda() {
        let examples = blobs(100, 2);
        let outcome =
            tune_lambda(&examples, &labels(), &TrainConfig::default(), &LAMBDA_GRID, 5).unwrap();
        assert!(LAMBDA_GRID.contains(&outcome.best_lambda));
        assert_eq!(outcome.trials.len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        /// Probabilities sum to one for random inputs and random weights.
        #[test]
        fn probabilities_sum_to_one(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let weights = vec![
                (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            ];
            let bias = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let model = LrModel::from_weights(labels(), weights, bias).unwrap();
            let (_, p) = model.predict(&dense(4, &values)).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
