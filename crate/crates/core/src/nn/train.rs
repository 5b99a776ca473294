//! Minibatch training on binary cross-entropy, with heavy-ball or Adam
//! updates.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{HodError, Result};
use crate::preprocess::Dataset;
use crate::rng::{derive_seed, rng_from, tag};

use super::Trainable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of contiguous window blocks held out for validation.
    pub validation_fraction: f64,
    /// Windows per contiguous split block.
    pub block_len: usize,
    /// Heavy-ball momentum; 0 is plain gradient descent.
    pub momentum: f64,
    /// Rescale each batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    pub optimizer: Optimizer,
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `v ← μ·v − η·g; θ ← θ + v` with μ = `TrainConfig::momentum`.
    #[default]
    Sgd,
    /// Adam with the usual β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and bias
    /// correction; `momentum` is ignored.
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            validation_fraction: 0.2,
            block_len: 5000,
            momentum: 0.0,
            clip_norm: None,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HodError::InvalidInput(format!("train config: {m}")));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        if self.block_len == 0 {
            return bad("block_len must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub wall_time: Duration,
}

/// Splits `0..n` into contiguous blocks and holds out a `fraction` of them,
/// spread evenly through the sequence. Training windows within `gap`
/// positions of a held-out block are dropped so no training window shares
/// samples with a validation window.
pub fn block_split(n: usize, fraction: f64, block_len: usize, gap: usize) -> (Vec<usize>, Vec<usize>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let min_blocks = (2.0 / fraction.min(1.0 - fraction)).ceil() as usize;
    let blocks = (n / block_len.max(1)).max(min_blocks).min(n);
    let bounds: Vec<usize> = (0..=blocks).map(|b| b * n / blocks).collect();
    let held_out = |b: usize| ((b + 1) as f64 * fraction).floor() > (b as f64 * fraction).floor();
    let gap = gap.min((n / blocks) / 4);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for b in 0..blocks {
        let (lo, hi) = (bounds[b], bounds[b + 1]);
        if held_out(b) {
            val.extend(lo..hi);
            continue;
        }
        let lo_cut = if b > 0 && held_out(b - 1) { lo + gap } else { lo };
        let hi_cut = if b + 1 < blocks && held_out(b + 1) {
            hi.saturating_sub(gap)
        } else {
            hi
        };
        train.extend(lo_cut..hi_cut.max(lo_cut));
    }
    (train, val)
}

fn evaluate<M: Trainable>(model: &M, ds: &Dataset, idx: &[usize], scratch: &mut [f64]) -> (f64, f64) {
    if idx.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let y = ds.label(i).is_on();
        let z = model.logit(ds.row(i), scratch);
        loss += super::bce_with_logit(z, f64::from(u8::from(y)));
        if (z >= 0.0) == y {
            correct += 1;
        }
    }
    (loss / idx.len() as f64, correct as f64 / idx.len() as f64)
}

/// Trains `model` in place of a copy and returns the parameters with the
/// best validation accuracy seen over the epoch budget.
pub fn train<M: Trainable>(mut model: M, dataset: &Dataset, config: &TrainConfig) -> Result<(M, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(HodError::Training("empty dataset".into()));
    }
    if dataset.width() != model.input_width() {
        return Err(HodError::Dimension {
            expected: model.input_width(),
            actual: dataset.width(),
        });
    }
    let pos = dataset.positives();
    if pos == 0 || pos == dataset.len() {
        return Err(HodError::Training("dataset contains a single class".into()));
    }
    let (train_idx, val_idx) = block_split(
        dataset.len(),
        config.validation_fraction,
        config.block_len,
        dataset.width(),
    );
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(HodError::Training(format!(
            "split of {} windows left an empty partition",
            dataset.len()
        )));
    }

    let started = Instant::now();
    let n_params = model.param_count();
    let mut grad = vec![0.0; n_params];
    let mut velocity = vec![0.0; n_params];
    // Adam second moments; `velocity` holds the first.
    let mut second = match config.optimizer {
        Optimizer::Adam => vec![0.0; n_params],
        Optimizer::Sgd => Vec::new(),
    };
    let mut steps = 0i32;
    let mut scratch = vec![0.0; model.train_scratch_len().max(model.scratch_len())];
    let mut rng = rng_from(derive_seed(config.seed, tag::SHUFFLE));
    let mut order = train_idx.clone();

    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let y = dataset.label(i).is_on();
                let target = f64::from(u8::from(y));
                let (loss, p) = model.accumulate_gradient(dataset.row(i), target, &mut grad, &mut scratch);
                batch_loss += loss;
                if (p >= 0.5) == y {
                    correct += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(HodError::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let mut norm_scale = 1.0;
            if let Some(max_norm) = config.clip_norm {
                let norm = grad.iter().map(|g| (g * scale).powi(2)).sum::<f64>().sqrt();
                if norm > max_norm {
                    norm_scale = max_norm / norm;
                }
            }
            let mut at = 0;
            match config.optimizer {
                Optimizer::Sgd => {
                    let step = config.learning_rate * scale * norm_scale;
                    for slice in model.param_slices_mut() {
                        for p in slice.iter_mut() {
                            let v = config.momentum * velocity[at] - step * grad[at];
                            velocity[at] = v;
                            *p += v;
                            at += 1;
                        }
                    }
                }
                Optimizer::Adam => {
                    steps = steps.saturating_add(1);
                    let c1 = 1.0 - ADAM_BETA1.powi(steps);
                    let c2 = 1.0 - ADAM_BETA2.powi(steps);
                    for slice in model.param_slices_mut() {
                        for p in slice.iter_mut() {
                            let g = grad[at] * scale * norm_scale;
                            velocity[at] = ADAM_BETA1 * velocity[at] + (1.0 - ADAM_BETA1) * g;
                            second[at] = ADAM_BETA2 * second[at] + (1.0 - ADAM_BETA2) * g * g;
                            *p -=
                                config.learning_rate * (velocity[at] / c1) / ((second[at] / c2).sqrt() + ADAM_EPSILON);
                            at += 1;
                        }
                    }
                }
            }
        }
        let (val_loss, val_acc) = evaluate(&model, dataset, &val_idx, &mut scratch);
        if !val_loss.is_finite() {
            return Err(HodError::Training(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            validation_loss: val_loss,
            validation_accuracy: val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best_epoch = epoch;
            best = model.clone();
        }
    }

    Ok((
        best,
        TrainReport {
            history,
            best_epoch,
            best_validation_accuracy: best_acc,
            train_indices: train_idx,
            validation_indices: val_idx,
            wall_time: started.elapsed(),
        },
    ))
}
