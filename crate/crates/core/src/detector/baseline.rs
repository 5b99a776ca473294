//! Dynamic-threshold detector: a touch is anything above a fixed share of
//! the way from the ambient level to the average touch maximum.

use crate::error::{HodError, Result};
use crate::sim::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Position of the threshold between ambient and the average maximum.
    pub threshold_fraction: f64,
    /// Weight of the latest touch maximum in the running average.
    pub touch_weight: f64,
    /// EMA weight of the ambient level while untouched.
    pub ambient_alpha: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            threshold_fraction: 0.4,
            touch_weight: 0.5,
            ambient_alpha: super::DEFAULT_AMBIENT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub config: BaselineConfig,
    pub ambient_level: f64,
    pub avg_max_touch_value: f64,
    pub decision: Label,
    touch_max: f64,
}

impl BaselineState {
    /// `initial_touch_level` seeds the average maximum and must lie above
    /// the ambient level.
    pub fn new(ambient_level: f64, initial_touch_level: f64, config: BaselineConfig) -> Result<Self> {
        if !(config.threshold_fraction > 0.0 && config.threshold_fraction < 1.0) {
            return Err(HodError::InvalidInput("threshold fraction must be in (0, 1)".into()));
        }
        if !(config.touch_weight > 0.0 && config.touch_weight <= 1.0) {
            return Err(HodError::InvalidInput("touch weight must be in (0, 1]".into()));
        }
        if !(config.ambient_alpha >= 0.0 && config.ambient_alpha <= 1.0) {
            return Err(HodError::InvalidInput("ambient smoothing must be in [0, 1]".into()));
        }
        if !(ambient_level.is_finite() && initial_touch_level.is_finite() && initial_touch_level > ambient_level) {
            return Err(HodError::InvalidInput(
                "initial touch level must be finite and above ambient".into(),
            ));
        }
        Ok(BaselineState {
            config,
            ambient_level,
            avg_max_touch_value: initial_touch_level,
            decision: Label::HandsOff,
            touch_max: f64::NEG_INFINITY,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.ambient_level + self.config.threshold_fraction * (self.avg_max_touch_value - self.ambient_level)
    }

    /// Classifies one sample and adapts. When a touch ends, the average
    /// maximum moves toward that touch's peak; the threshold follows.
    pub fn step(&mut self, sample: f64) -> Label {
        if sample > self.threshold() {
            self.decision = Label::HandsOn;
            self.touch_max = self.touch_max.max(sample);
            return self.decision;
        }
        if self.decision.is_on() {
            let w = self.config.touch_weight;
            // Keep the average strictly above ambient so the threshold does too.
            let peak = self
                .touch_max
                .max(self.ambient_level + f64::EPSILON * self.ambient_level.abs().max(1.0));
            self.avg_max_touch_value += w * (peak - self.avg_max_touch_value);
            self.touch_max = f64::NEG_INFINITY;
        }
        self.decision = Label::HandsOff;
        self.ambient_level += self.config.ambient_alpha * (sample - self.ambient_level);
        if self.avg_max_touch_value <= self.ambient_level {
            self.avg_max_touch_value = self.ambient_level + f64::EPSILON * self.ambient_level.abs().max(1.0);
        }
        self.decision
    }

    pub fn run(&mut self, samples: &[f64]) -> Vec<Label> {
        samples.iter().map(|&s| self.step(s)).collect()
    }
}

/// Free-function form of [`BaselineState::step`].
pub fn baseline_step(state: &mut BaselineState, sample: f64) -> Label {
    state.step(sample)
}
