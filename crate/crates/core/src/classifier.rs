//! Tansig multilayer perceptron trained by online backpropagation with
//! momentum.
//!
//! The default shape is 40-25-16: eigenspace coordinates in, one hidden
//! layer, one output per subject. Targets are one-hot in the tansig range
//! (+1 for the true class, −1 elsewhere) and the loss is ½·Σ(output −
//! target)². Training visits samples one at a time in a seeded shuffled
//! order; samples are put into a canonical order first, so the caller's
//! ordering never affects the result.

use crate::eigenspace::FeatureVector;
use crate::subseed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss in epoch {epoch}; training diverged")]
    NonFiniteLoss { epoch: usize },
    #[error("k {k} outside 1..={num_classes}")]
    InvalidK { k: usize, num_classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub target_loss: f64,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![40, 25, 16],
            learning_rate: 0.02,
            momentum: 0.9,
            max_epochs: 500,
            target_loss: 1e-3,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl MlpConfig {
    /// # Panics
    /// On fewer than 2 layers, a zero-width layer, or out-of-range
    /// hyperparameters.
    pub fn validate(&self) {
        assert!(self.layer_sizes.len() >= 2, "need at least 2 layers");
        assert!(
            self.layer_sizes.iter().all(|&s| s >= 1),
            "layer sizes must be at least 1"
        );
        assert!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning rate must be finite and non-negative"
        );
        assert!(
            (0.0..1.0).contains(&self.momentum),
            "momentum must be in [0, 1)"
        );
        assert!(
            self.init_scale > 0.0 && self.init_scale.is_finite(),
            "init_scale must be positive"
        );
        assert!(
            self.target_loss >= 0.0,
            "target_loss must be non-negative"
        );
    }
}

/// Weights, biases, and momentum state. `weights[l][o][i]` connects input `i`
/// of non-input layer `l` to its output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) config: MlpConfig,
    pub(crate) weights: Vec<Vec<Vec<f64>>>,
    pub(crate) biases: Vec<Vec<f64>>,
    pub(crate) w_velocity: Vec<Vec<Vec<f64>>>,
    pub(crate) b_velocity: Vec<Vec<f64>>,
}

/// Output activations with the induced class ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl Prediction {
    /// Ranks classes by descending score; equal scores order by lower label.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self { scores, ranking }
    }
}

/// 2/(1+e^(−2x)) − 1: output in (−1, 1), saturating to ±1 in double
/// precision beyond |x| ≈ 19.
pub fn tansig(x: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * x).exp()) - 1.0
}

/// Fresh model: weights uniform in ±init_scale/√fan_in from the seeded
/// generator, biases and velocity zero.
pub fn init_model(config: MlpConfig) -> MlpModel {
    config.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in config.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = config.init_scale / (fan_in as f64).sqrt();
        weights.push(
            (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.random_range(-bound..=bound)).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
        biases.push(vec![0.0; fan_out]);
    }
    let w_velocity = weights
        .iter()
        .map(|m: &Vec<Vec<f64>>| m.iter().map(|r| vec![0.0; r.len()]).collect())
        .collect();
    let b_velocity = biases.iter().map(|b| vec![0.0; b.len()]).collect();
    MlpModel {
        config,
        weights,
        biases,
        w_velocity,
        b_velocity,
    }
}

impl MlpModel {
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        *self.config.layer_sizes.last().unwrap()
    }

    fn input_size(&self) -> usize {
        self.config.layer_sizes[0]
    }

    /// Activations of every layer, input included.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(input.to_vec());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let prev = acts.last().unwrap();
            let layer = w
                .iter()
                .zip(b)
                .map(|(row, &bias)| {
                    let z: f64 =
                        bias + row.iter().zip(prev).map(|(&wi, &ai)| wi * ai).sum::<f64>();
                    tansig(z)
                })
                .collect();
            acts.push(layer);
        }
        acts
    }

    fn check_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|v| v.is_finite())
    }

    /// Flat snapshot of every weight and bias: layer by layer, weight rows
    /// first, then that layer's biases. Pairs with `set_params`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for row in w {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(b);
        }
        out
    }

    /// Restores a `params` snapshot. Velocities are untouched.
    ///
    /// # Panics
    /// If `values` is not exactly the model's parameter count.
    pub fn set_params(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for p in w.iter_mut().flatten().chain(b.iter_mut()) {
                *p = *it.next().expect("parameter snapshot too short");
            }
        }
        assert!(it.next().is_none(), "parameter snapshot too long");
    }
}

fn targets(label: usize, num_classes: usize) -> Vec<f64> {
    assert!(label < num_classes, "label {label} out of range");
    let mut t = vec![-1.0; num_classes];
    t[label] = 1.0;
    t
}

fn sample_loss(output: &[f64], target: &[f64]) -> f64 {
    0.5 * output
        .iter()
        .zip(target)
        .map(|(&o, &t)| (o - t) * (o - t))
        .sum::<f64>()
}

/// Propagates the input and ranks the output scores.
pub fn forward(model: &MlpModel, input: &FeatureVector) -> Result<Prediction, MlpError> {
    if input.len() != model.input_size() {
        return Err(MlpError::DimensionMismatch {
            expected: model.input_size(),
            got: input.len(),
        });
    }
    let acts = model.activations(input.values());
    Ok(Prediction::from_scores(acts.last().unwrap().clone()))
}

/// Canonical sample order: by label, then lexicographically by feature
/// values. The seeded shuffle starts from this order, so training is
/// independent of how the caller arranged the slice.
fn canonical_order(samples: &[(FeatureVector, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, la) = (&samples[a].0, samples[a].1);
        let (vb, lb) = (&samples[b].0, samples[b].1);
        la.cmp(&lb)
            .then_with(|| {
                for (x, y) in va.values().iter().zip(vb.values()) {
                    let c = x.total_cmp(y);
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                va.len().cmp(&vb.len())
            })
    });
    order
}

/// One online pass over the samples. The visit order is the canonical order
/// shuffled by a stream derived from (config.seed, epoch). Returns the mean
/// per-sample loss, each measured just before that sample's update.
pub fn train_epoch(
    model: &mut MlpModel,
    samples: &[(FeatureVector, usize)],
    epoch: usize,
) -> Result<f64, MlpError> {
    assert!(!samples.is_empty(), "no training samples");
    let num_classes = model.num_classes();
    for (v, label) in samples {
        if v.len() != model.input_size() {
            return Err(MlpError::DimensionMismatch {
                expected: model.input_size(),
                got: v.len(),
            });
        }
        assert!(*label < num_classes, "label {label} out of range");
    }

    let mut order = canonical_order(samples);
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(model.config.seed, 1 + epoch as u64));
    order.shuffle(&mut rng);

    let lr = model.config.learning_rate;
    let momentum = model.config.momentum;
    let mut total_loss = 0.0;
    for &s in &order {
        let (input, label) = (&samples[s].0, samples[s].1);
        let acts = model.activations(input.values());
        let target = targets(label, num_classes);
        let loss = sample_loss(acts.last().unwrap(), &target);
        if !loss.is_finite() {
            return Err(MlpError::NonFiniteLoss { epoch });
        }
        total_loss += loss;

        // output delta, then backpropagate through tansig' = 1 − a²
        let layers = model.weights.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); layers];
        deltas[layers - 1] = acts[layers]
            .iter()
            .zip(&target)
            .map(|(&a, &t)| (a - t) * (1.0 - a * a))
            .collect();
        for l in (0..layers - 1).rev() {
            let next = &model.weights[l + 1];
            deltas[l] = (0..model.config.layer_sizes[l + 1])
                .map(|i| {
                    let back: f64 = next
                        .iter()
                        .zip(&deltas[l + 1])
                        .map(|(row, &d)| row[i] * d)
                        .sum();
                    let a = acts[l + 1][i];
                    back * (1.0 - a * a)
                })
                .collect();
        }
        for l in 0..layers {
            for (o, &delta) in deltas[l].iter().enumerate() {
                for (i, &a) in acts[l].iter().enumerate() {
                    let v = momentum * model.w_velocity[l][o][i] - lr * delta * a;
                    model.w_velocity[l][o][i] = v;
                    model.weights[l][o][i] += v;
                }
                let v = momentum * model.b_velocity[l][o] - lr * delta;
                model.b_velocity[l][o] = v;
                model.biases[l][o] += v;
            }
        }
    }
    let mean = total_loss / samples.len() as f64;
    if !mean.is_finite() || !model.check_finite() {
        return Err(MlpError::NonFiniteLoss { epoch });
    }
    Ok(mean)
}

/// Runs epochs until the mean loss reaches `target_loss` or `max_epochs` is
/// hit; returns the full loss history.
pub fn train(
    model: &mut MlpModel,
    samples: &[(FeatureVector, usize)],
) -> Result<Vec<f64>, MlpError> {
    let mut history = Vec::new();
    for epoch in 0..model.config.max_epochs {
        let loss = train_epoch(model, samples, epoch)?;
        history.push(loss);
        if loss <= model.config.target_loss {
            break;
        }
    }
    Ok(history)
}

/// First `k` labels of the forward ranking.
pub fn predict_topk(
    model: &MlpModel,
    input: &FeatureVector,
    k: usize,
) -> Result<Vec<usize>, MlpError> {
    let num_classes = model.num_classes();
    if k == 0 || k > num_classes {
        return Err(MlpError::InvalidK { k, num_classes });
    }
    let pred = forward(model, input)?;
    Ok(pred.ranking[..k].to_vec())
}
