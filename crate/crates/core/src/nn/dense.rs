use std::fmt;

use rand::Rng;

use crate::error::{HodError, Result};

use super::{glorot, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Fully connected layer, weights stored row-major `[outputs × inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let mut layer = DenseLayer::zeros(inputs, outputs, activation);
        glorot(rng, &mut layer.weights, inputs, outputs);
        layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.biases.len() != self.outputs {
            return Err(HodError::Dimension {
                expected: self.inputs * self.outputs,
                actual: self.weights.len(),
            });
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(HodError::InvalidInput("non-finite layer parameter".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    /// Pre-activation of unit `j`.
    #[inline]
    pub fn pre_activation(&self, j: usize, x: &[f32]) -> f64 {
        let mut acc = self.biases[j];
        for (w, &v) in self.row(j).iter().zip(x) {
            acc += w * v as f64;
        }
        acc
    }

    /// Pre-activation of unit `j` over f64 inputs.
    #[inline]
    pub fn pre_activation_f64(&self, j: usize, x: &[f64]) -> f64 {
        let mut acc = self.biases[j];
        for (w, &v) in self.row(j).iter().zip(x) {
            acc += w * v;
        }
        acc
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.outputs) {
            *o = self.activation.apply(self.pre_activation_f64(j, x));
        }
    }
}
