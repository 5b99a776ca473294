use rand::Rng;

use crate::error::{HodError, Result};
use crate::preprocess::{Window, WINDOW_WIDTH};

use super::{bce_with_logit, check_width, sigmoid, Activation, Classifier, DenseLayer, Parametric, Trainable};

/// Delay buffer in front of a one-hidden-layer perceptron: the whole window
/// is presented at once to `hidden`, whose outputs feed a single sigmoid unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TdnnModel {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl TdnnModel {
    pub fn new<R: Rng>(input_width: usize, hidden: usize, rng: &mut R) -> Self {
        TdnnModel {
            hidden: DenseLayer::glorot(input_width, hidden, Activation::Tanh, rng),
            output: DenseLayer::glorot(hidden, 1, Activation::Sigmoid, rng),
        }
    }

    pub fn zeros(input_width: usize, hidden: usize) -> Self {
        TdnnModel {
            hidden: DenseLayer::zeros(input_width, hidden, Activation::Tanh),
            output: DenseLayer::zeros(hidden, 1, Activation::Sigmoid),
        }
    }

    pub fn from_layers(hidden: DenseLayer, output: DenseLayer) -> Result<Self> {
        hidden.validate()?;
        output.validate()?;
        if output.inputs != hidden.outputs || output.outputs != 1 {
            return Err(HodError::Dimension {
                expected: hidden.outputs,
                actual: output.inputs,
            });
        }
        if output.activation != Activation::Sigmoid {
            return Err(HodError::InvalidInput("TDNN output unit must be sigmoid".into()));
        }
        Ok(TdnnModel { hidden, output })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.outputs
    }

    /// `(inputs + 1)·H + (H + 1)`.
    pub fn expected_param_count(input_width: usize, hidden: usize) -> usize {
        (input_width + 1) * hidden + hidden + 1
    }

    /// Checked forward pass over a window.
    pub fn forward(&self, window: &Window) -> Result<f64> {
        check_width(self.input_width(), &window.values)?;
        Ok(self.predict_proba(&window.values, &mut []))
    }

    /// Default-size model for 100-sample windows.
    pub fn for_windows<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        TdnnModel::new(WINDOW_WIDTH, hidden, rng)
    }
}

impl Classifier for TdnnModel {
    fn input_width(&self) -> usize {
        self.hidden.inputs
    }

    fn predict_proba(&self, x: &[f32], scratch: &mut [f64]) -> f64 {
        sigmoid(self.logit(x, scratch))
    }
}

impl Parametric for TdnnModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.hidden.weights,
            &self.hidden.biases,
            &self.output.weights,
            &self.output.biases,
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.hidden.weights,
            &mut self.hidden.biases,
            &mut self.output.weights,
            &mut self.output.biases,
        ]
    }
}

impl Trainable for TdnnModel {
    fn train_scratch_len(&self) -> usize {
        self.hidden_size()
    }

    fn logit(&self, x: &[f32], _scratch: &mut [f64]) -> f64 {
        let act = self.hidden.activation;
        let mut z = self.output.biases[0];
        for j in 0..self.hidden.outputs {
            z += self.output.weights[j] * act.apply(self.hidden.pre_activation(j, x));
        }
        z
    }

    fn accumulate_gradient(&self, x: &[f32], target: f64, grad: &mut [f64], scratch: &mut [f64]) -> (f64, f64) {
        let h = self.hidden.outputs;
        let n_in = self.hidden.inputs;
        let act = self.hidden.activation;
        let hidden_out = &mut scratch[..h];
        let mut z = self.output.biases[0];
        for (j, o) in hidden_out.iter_mut().enumerate() {
            *o = act.apply(self.hidden.pre_activation(j, x));
            z += self.output.weights[j] * *o;
        }
        let prob = sigmoid(z);
        let dz = prob - target;

        let (w1, rest) = grad.split_at_mut(n_in * h);
        let (b1, rest) = rest.split_at_mut(h);
        let (w2, b2) = rest.split_at_mut(h);
        b2[0] += dz;
        for j in 0..h {
            let hj = hidden_out[j];
            w2[j] += dz * hj;
            let da = dz * self.output.weights[j] * act.derivative_from_output(hj);
            if da != 0.0 {
                b1[j] += da;
                for (g, &v) in w1[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                    *g += da * v as f64;
                }
            }
        }
        (bce_with_logit(z, target), prob)
    }
}
