use rand::Rng;

use crate::error::{HodError, Result};

use super::{bce_with_logit, glorot, sigmoid, Activation, Classifier, DenseLayer, Parametric, Trainable};

/// Gate order inside the parameter blocks.
const INPUT: usize = 0;
const FORGET: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

/// Single-layer LSTM over a scalar sequence with a sigmoid readout of the
/// final hidden state.
///
/// `gate_weights` holds four `[H × (1 + H)]` row-major blocks in the order
/// input, forget, candidate, output; row `j` is `[w_x, w_h(j, 0..H)]`.
/// `gate_biases` holds four `H` blocks in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    hidden_size: usize,
    seq_len: usize,
    pub gate_weights: Vec<f64>,
    pub gate_biases: Vec<f64>,
    pub readout: DenseLayer,
}

/// Per-step cell trajectory, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmModel {
    pub fn zeros(seq_len: usize, hidden_size: usize) -> Self {
        LstmModel {
            hidden_size,
            seq_len,
            gate_weights: vec![0.0; 4 * hidden_size * (1 + hidden_size)],
            gate_biases: vec![0.0; 4 * hidden_size],
            readout: DenseLayer::zeros(hidden_size, 1, Activation::Sigmoid),
        }
    }

    /// Glorot weights; forget-gate biases start at 1 so early training
    /// keeps the cell state.
    pub fn new<R: Rng>(seq_len: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut m = LstmModel::zeros(seq_len, hidden_size);
        glorot(rng, &mut m.gate_weights, 1 + hidden_size, hidden_size);
        glorot(rng, &mut m.readout.weights, hidden_size, 1);
        m.gate_biases[FORGET * hidden_size..(FORGET + 1) * hidden_size].fill(1.0);
        m
    }

    pub fn from_parts(
        seq_len: usize,
        hidden_size: usize,
        gate_weights: Vec<f64>,
        gate_biases: Vec<f64>,
        readout: DenseLayer,
    ) -> Result<Self> {
        let h = hidden_size;
        if gate_weights.len() != 4 * h * (1 + h) {
            return Err(HodError::Dimension {
                expected: 4 * h * (1 + h),
                actual: gate_weights.len(),
            });
        }
        if gate_biases.len() != 4 * h {
            return Err(HodError::Dimension {
                expected: 4 * h,
                actual: gate_biases.len(),
            });
        }
        readout.validate()?;
        if readout.inputs != h || readout.outputs != 1 {
            return Err(HodError::Dimension {
                expected: h,
                actual: readout.inputs,
            });
        }
        Ok(LstmModel {
            hidden_size,
            seq_len,
            gate_weights,
            gate_biases,
            readout,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// `4·H·(H + 2) + H + 1`.
    pub fn expected_param_count(hidden: usize) -> usize {
        4 * hidden * (hidden + 2) + hidden + 1
    }

    /// Checked forward pass.
    pub fn forward(&self, sequence: &[f32]) -> Result<f64> {
        super::check_width(self.seq_len, sequence)?;
        let mut scratch = vec![0.0; self.scratch_len()];
        Ok(self.predict_proba(sequence, &mut scratch))
    }

    #[inline]
    fn gate_row(&self, gate: usize, j: usize) -> &[f64] {
        let stride = 1 + self.hidden_size;
        let base = (gate * self.hidden_size + j) * stride;
        &self.gate_weights[base..base + stride]
    }

    #[inline]
    fn gate_bias(&self, gate: usize, j: usize) -> f64 {
        self.gate_biases[gate * self.hidden_size + j]
    }

    /// Gate pre-activations for step input `x` and previous hidden `h`, into `pre` (4H).
    #[inline]
    fn pre_activations(&self, x: f64, h: &[f64], pre: &mut [f64]) {
        let hs = self.hidden_size;
        for gate in 0..4 {
            for j in 0..hs {
                let row = self.gate_row(gate, j);
                let mut acc = self.gate_bias(gate, j) + row[0] * x;
                for (w, hv) in row[1..].iter().zip(h) {
                    acc += w * hv;
                }
                pre[gate * hs + j] = acc;
            }
        }
    }

    /// Runs the cell over `sequence` from zero state and returns every step.
    pub fn trajectory(&self, sequence: &[f32]) -> Vec<LstmStep> {
        let hs = self.hidden_size;
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        let mut pre = vec![0.0; 4 * hs];
        let mut out = Vec::with_capacity(sequence.len());
        for &x in sequence {
            self.pre_activations(x as f64, &h, &mut pre);
            let mut step = LstmStep {
                input_gate: vec![0.0; hs],
                forget_gate: vec![0.0; hs],
                candidate: vec![0.0; hs],
                output_gate: vec![0.0; hs],
                cell: vec![0.0; hs],
                hidden: vec![0.0; hs],
            };
            for j in 0..hs {
                let i = sigmoid(pre[INPUT * hs + j]);
                let f = sigmoid(pre[FORGET * hs + j]);
                let g = pre[CANDIDATE * hs + j].tanh();
                let o = sigmoid(pre[OUTPUT * hs + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
                step.input_gate[j] = i;
                step.forget_gate[j] = f;
                step.candidate[j] = g;
                step.output_gate[j] = o;
                step.cell[j] = c[j];
                step.hidden[j] = h[j];
            }
            out.push(step);
        }
        out
    }
}

impl Classifier for LstmModel {
    fn input_width(&self) -> usize {
        self.seq_len
    }

    fn scratch_len(&self) -> usize {
        6 * self.hidden_size
    }

    fn predict_proba(&self, x: &[f32], scratch: &mut [f64]) -> f64 {
        sigmoid(self.logit(x, scratch))
    }
}

impl Parametric for LstmModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.gate_weights,
            &self.gate_biases,
            &self.readout.weights,
            &self.readout.biases,
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.gate_weights,
            &mut self.gate_biases,
            &mut self.readout.weights,
            &mut self.readout.biases,
        ]
    }
}

impl Trainable for LstmModel {
    /// Gates, cell and hidden state for every step plus the initial state,
    /// and two H-sized backward accumulators.
    fn train_scratch_len(&self) -> usize {
        let hs = self.hidden_size;
        (self.seq_len + 1) * 6 * hs + 2 * hs + 4 * hs
    }

    fn logit(&self, x: &[f32], scratch: &mut [f64]) -> f64 {
        let hs = self.hidden_size;
        let (h, rest) = scratch.split_at_mut(hs);
        let (c, rest) = rest.split_at_mut(hs);
        let pre = &mut rest[..4 * hs];
        h.fill(0.0);
        c.fill(0.0);
        for &xv in x {
            self.pre_activations(xv as f64, h, pre);
            for j in 0..hs {
                let i = sigmoid(pre[INPUT * hs + j]);
                let f = sigmoid(pre[FORGET * hs + j]);
                let g = pre[CANDIDATE * hs + j].tanh();
                let o = sigmoid(pre[OUTPUT * hs + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
        }
        self.readout.pre_activation_f64(0, h)
    }

    fn accumulate_gradient(&self, x: &[f32], target: f64, grad: &mut [f64], scratch: &mut [f64]) -> (f64, f64) {
        let hs = self.hidden_size;
        let steps = x.len();
        // Per step t (0 = initial state): [i f g o | c | h], each H wide.
        let frame = 6 * hs;
        let (states, rest) = scratch.split_at_mut((steps + 1) * frame);
        let (dh, rest) = rest.split_at_mut(hs);
        let (dc, rest) = rest.split_at_mut(hs);
        let da = &mut rest[..4 * hs];
        states[..frame].fill(0.0);

        for t in 0..steps {
            let (prev, cur) = states.split_at_mut((t + 1) * frame);
            let prev = &prev[t * frame..];
            let cur = &mut cur[..frame];
            let (gates, cur_state) = cur.split_at_mut(4 * hs);
            self.pre_activations(x[t] as f64, &prev[5 * hs..6 * hs], gates);
            for j in 0..hs {
                let i = sigmoid(gates[INPUT * hs + j]);
                let f = sigmoid(gates[FORGET * hs + j]);
                let g = gates[CANDIDATE * hs + j].tanh();
                let o = sigmoid(gates[OUTPUT * hs + j]);
                gates[INPUT * hs + j] = i;
                gates[FORGET * hs + j] = f;
                gates[CANDIDATE * hs + j] = g;
                gates[OUTPUT * hs + j] = o;
                let cj = f * prev[4 * hs + j] + i * g;
                cur_state[j] = cj;
                cur_state[hs + j] = o * cj.tanh();
            }
        }

        let last = &states[steps * frame..];
        let h_final = &last[5 * hs..6 * hs];
        let z = self.readout.pre_activation_f64(0, h_final);
        let prob = sigmoid(z);
        let dz = prob - target;

        let n_gw = self.gate_weights.len();
        let (g_w, rest) = grad.split_at_mut(n_gw);
        let (g_b, rest) = rest.split_at_mut(4 * hs);
        let (g_rw, g_rb) = rest.split_at_mut(hs);
        g_rb[0] += dz;
        for j in 0..hs {
            g_rw[j] += dz * h_final[j];
            dh[j] = dz * self.readout.weights[j];
        }
        dc.fill(0.0);

        let stride = 1 + hs;
        for t in (0..steps).rev() {
            let cur = &states[(t + 1) * frame..(t + 2) * frame];
            let prev = &states[t * frame..(t + 1) * frame];
            let c_prev = &prev[4 * hs..5 * hs];
            let h_prev = &prev[5 * hs..6 * hs];
            for j in 0..hs {
                let i = cur[INPUT * hs + j];
                let f = cur[FORGET * hs + j];
                let g = cur[CANDIDATE * hs + j];
                let o = cur[OUTPUT * hs + j];
                let tc = cur[4 * hs + j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                da[INPUT * hs + j] = dcj * g * i * (1.0 - i);
                da[FORGET * hs + j] = dcj * c_prev[j] * f * (1.0 - f);
                da[CANDIDATE * hs + j] = dcj * i * (1.0 - g * g);
                da[OUTPUT * hs + j] = d_o * o * (1.0 - o);
                dc[j] = dcj * f;
            }
            let xt = x[t] as f64;
            for gate in 0..4 {
                for j in 0..hs {
                    let d = da[gate * hs + j];
                    g_b[gate * hs + j] += d;
                    let base = (gate * hs + j) * stride;
                    g_w[base] += d * xt;
                    for (gw, hp) in g_w[base + 1..base + stride].iter_mut().zip(h_prev) {
                        *gw += d * hp;
                    }
                }
            }
            for (k, dhk) in dh.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (row, d) in da.iter().enumerate() {
                    acc += d * self.gate_weights[row * stride + 1 + k];
                }
                *dhk = acc;
            }
        }
        (bce_with_logit(z, target), prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;

    fn hand_set() -> LstmModel {
        // rows are [w_x, w_h] per gate: input, forget, candidate, output
        LstmModel::from_parts(
            3,
            1,
            vec![0.5, -0.3, -0.4, 0.2, 0.9, 0.7, 0.3, -0.5],
            vec![0.1, 0.6, -0.2, 0.05],
            DenseLayer {
                inputs: 1,
                outputs: 1,
                weights: vec![1.5],
                biases: vec![-0.25],
                activation: Activation::Sigmoid,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_half() {
        let m = LstmModel::zeros(100, 4);
        let seq: Vec<f32> = (0..100).map(|i| (i as f32 * 0.37).sin()).collect();
        for step in m.trajectory(&seq) {
            assert!(step.input_gate.iter().all(|&g| g == 0.5));
            assert!(step.cell.iter().all(|c| c.abs() <= 100.0));
        }
        assert_eq!(m.forward(&seq).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_trajectory() {
        // Reference values from an mpmath step-through at 30 digits.
        let expected = [
            (0.390_213_866_575_362_6, 0.217_954_585_385_25),
            (0.067_477_430_792_907_25, 0.030_180_384_641_991),
            (0.067_623_198_775_339_84, 0.035_613_575_116_504_67),
        ];
        let m = hand_set();
        let traj = m.trajectory(&[1.0, -0.5, 0.25]);
        for (step, (c, h)) in traj.iter().zip(expected) {
            assert!((step.cell[0] - c).abs() < 1e-14, "{} vs {c}", step.cell[0]);
            assert!((step.hidden[0] - h).abs() < 1e-14, "{} vs {h}", step.hidden[0]);
        }
        let p = m.forward(&[1.0, -0.5, 0.25]).unwrap();
        assert!((p - 0.451_012_742_635_832_96).abs() < 1e-14, "{p}");
    }

    #[test]
    fn param_count_formula() {
        let mut rng = rng_from(2);
        for h in super::super::HIDDEN_GRID {
            let m = LstmModel::new(100, h, &mut rng);
            assert_eq!(m.param_count(), LstmModel::expected_param_count(h));
        }
        assert_eq!(LstmModel::expected_param_count(1), 14);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LstmModel::zeros(100, 2).forward(&[0.0; 10]).is_err());
        assert!(LstmModel::from_parts(
            3,
            1,
            vec![0.0; 7],
            vec![0.0; 4],
            DenseLayer::zeros(1, 1, Activation::Sigmoid)
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn cell_state_bounded_by_step_count(seed in 0u64..1000, scale in 0.1f64..5.0) {
            let mut rng = rng_from(seed);
            let mut m = LstmModel::new(50, 3, &mut rng);
            for w in &mut m.gate_weights { *w *= scale; }
            let seq: Vec<f32> = (0..50).map(|i| ((i as f64 * 0.3 + seed as f64).sin() * 3.0) as f32).collect();
            for (t, step) in m.trajectory(&seq).iter().enumerate() {
                for (&c, (&i, &f)) in step.cell.iter().zip(step.input_gate.iter().zip(&step.forget_gate)) {
                    prop_assert!(c.abs() <= (t + 1) as f64);
                    prop_assert!(i > 0.0 && i < 1.0 && f > 0.0 && f < 1.0);
                }
            }
        }
    }
}
