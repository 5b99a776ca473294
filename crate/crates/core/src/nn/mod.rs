//! Dense and recurrent networks trained from scratch.

mod dense;
pub mod gradcheck;
mod lstm;
mod tdnn;
pub mod train;

pub use dense::{Activation, DenseLayer};
pub use gradcheck::{gradient_check, GradientCheck};
pub use lstm::LstmModel;
pub use tdnn::TdnnModel;
pub use train::{block_split, train, EpochStats, Optimizer, TrainConfig, TrainReport};

use rand::Rng;

use crate::error::{HodError, Result};

/// The hidden-layer sizes evaluated for both architectures.
pub const HIDDEN_GRID: [usize; 5] = [1, 5, 10, 20, 50];

/// Anything that maps a window to a hands-on probability.
pub trait Classifier: Send + Sync {
    fn input_width(&self) -> usize;

    /// Length of the scratch buffer [`Classifier::predict_proba`] needs.
    fn scratch_len(&self) -> usize {
        0
    }

    /// Probability of hands-on. `x.len()` must equal `input_width()` and
    /// `scratch.len()` must be at least `scratch_len()`; nothing is allocated.
    fn predict_proba(&self, x: &[f32], scratch: &mut [f64]) -> f64;

    fn predict(&self, x: &[f32], scratch: &mut [f64]) -> bool {
        self.predict_proba(x, scratch) >= 0.5
    }
}

/// Flat view over a model's parameters, in serialization order.
pub trait Parametric {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(HodError::Dimension {
                expected,
                actual: flat.len(),
            });
        }
        let mut at = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        }
        Ok(())
    }
}

/// A network trainable with binary cross-entropy.
pub trait Trainable: Classifier + Parametric + Clone {
    /// Scratch needed by [`Trainable::accumulate_gradient`].
    fn train_scratch_len(&self) -> usize;

    /// Adds `dLoss/dθ` for one sample into `grad`; returns the loss and the
    /// predicted probability.
    fn accumulate_gradient(&self, x: &[f32], target: f64, grad: &mut [f64], scratch: &mut [f64]) -> (f64, f64);

    /// Pre-sigmoid output.
    fn logit(&self, x: &[f32], scratch: &mut [f64]) -> f64;

    fn loss(&self, x: &[f32], target: f64) -> f64 {
        let mut scratch = vec![0.0; self.train_scratch_len().max(self.scratch_len())];
        bce_with_logit(self.logit(x, &mut scratch), target)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-(y·ln σ(z) + (1-y)·ln(1-σ(z)))` without forming σ(z).
#[inline]
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Glorot-uniform fill.
pub(crate) fn glorot<R: Rng>(rng: &mut R, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-limit..=limit);
    }
}

pub(crate) fn check_width(expected: usize, x: &[f32]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(HodError::Dimension {
            expected,
            actual: x.len(),
        })
    }
}
