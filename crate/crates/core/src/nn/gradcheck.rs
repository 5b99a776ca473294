//! Central finite-difference check of analytic gradients.

use crate::error::{HodError, Result};

use super::Trainable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// `max |analytic − numeric| / max(1, |numeric|)` over parameters.
    pub max_relative_error: f64,
    pub worst_parameter: usize,
}

pub fn gradient_check<M: Trainable>(model: &M, x: &[f32], target: f64, epsilon: f64) -> Result<GradientCheck> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(HodError::InvalidInput(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    super::check_width(model.input_width(), x)?;
    let n = model.param_count();
    let mut analytic = vec![0.0; n];
    let mut scratch = vec![0.0; model.train_scratch_len()];
    model.accumulate_gradient(x, target, &mut analytic, &mut scratch);
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(HodError::Training(format!(
            "non-finite analytic gradient at parameter {i}"
        )));
    }

    let base = model.flat_params();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_parameter: 0,
    };
    for i in 0..n {
        params[i] = base[i] + epsilon;
        probe.set_flat_params(&params)?;
        let up = probe.loss(x, target);
        params[i] = base[i] - epsilon;
        probe.set_flat_params(&params)?;
        let down = probe.loss(x, target);
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * epsilon);
        if !numeric.is_finite() {
            return Err(HodError::Training(format!(
                "non-finite numeric gradient at parameter {i}"
            )));
        }
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        if err > worst.max_relative_error {
            worst = GradientCheck {
                max_relative_error: err,
                worst_parameter: i,
            };
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LstmModel, Parametric, TdnnModel};
    use crate::rng::rng_from;
    use rand::Rng;

    fn random_input(seed: u64, n: usize) -> Vec<f32> {
        let mut rng = rng_from(seed);
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn tdnn_gradients() {
        let m = TdnnModel::for_windows(5, &mut rng_from(10));
        for s in 0..3 {
            let r = gradient_check(&m, &random_input(s, 100), (s % 2) as f64, 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "{r:?}");
        }
    }

    #[test]
    fn lstm_gradients() {
        let m = LstmModel::new(10, 2, &mut rng_from(11));
        for s in 0..3 {
            let r = gradient_check(&m, &random_input(100 + s, 10), (s % 2) as f64, 1e-5).unwrap();
            assert!(r.max_relative_error <= 1e-4, "{r:?}");
        }
    }

    #[test]
    fn unused_bias_has_no_effect() {
        let mut m = TdnnModel::for_windows(3, &mut rng_from(12));
        m.output.weights[1] = 0.0;
        let x = random_input(5, 100);
        let before = m.loss(&x, 1.0);
        m.hidden.biases[1] += 1e-3;
        let after = m.loss(&x, 1.0);
        assert!((after - before).abs() < f64::EPSILON * 4.0);
        let mut g = vec![0.0; m.param_count()];
        let mut scratch = vec![0.0; 3];
        m.accumulate_gradient(&x, 1.0, &mut g, &mut scratch);
        assert_eq!(g[100 * 3 + 1], 0.0);
    }

    #[test]
    fn epsilon_range_enforced() {
        let m = TdnnModel::zeros(4, 1);
        assert!(gradient_check(&m, &[0.0; 4], 1.0, 1e-2).is_err());
        assert!(gradient_check(&m, &[0.0; 4], 1.0, 1e-8).is_err());
        assert!(gradient_check(&m, &[0.0; 3], 1.0, 1e-5).is_err());
    }
}
