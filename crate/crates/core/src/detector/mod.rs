//! Streaming decisions, reaction-time measurement and the dynamic-threshold
//! baseline.

mod baseline;
mod reaction;

pub use baseline::{baseline_step, BaselineConfig, BaselineState};
pub use reaction::{
    contact_crossings, default_contact_threshold, latency_summary, measure_reaction, write_events_csv, LatencySummary,
    ReactionRecord, ReactionTracker, CONTACT_THRESHOLD_FRACTION, EVENTS_CSV_HEADER, REACTION_TIMEOUT,
};

use std::sync::Arc;

use crate::error::{HodError, Result};
use crate::model::Model;
use crate::preprocess::DataMode;
use crate::sim::Label;

/// Consecutive agreeing classifications required to flip the decision.
pub const DEFAULT_HYSTERESIS: usize = 5;
/// Per-sample EMA weight of the ambient estimate (about 2 s at 2 ms).
pub const DEFAULT_AMBIENT_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub hysteresis: usize,
    pub ambient_alpha: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hysteresis: DEFAULT_HYSTERESIS,
            ambient_alpha: DEFAULT_AMBIENT_ALPHA,
        }
    }
}

/// Emitted when the debounced decision flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionEvent {
    /// Index of the sample that completed the flip.
    pub index: usize,
    pub label: Label,
}

/// Sliding-window classifier over a raw capacitance stream.
///
/// Holds the last `width` raw samples (`width + 1` in gradient mode) in a
/// ring. After construction [`DetectorState::push_sample`] does not allocate.
#[derive(Debug, Clone)]
pub struct DetectorState {
    model: Arc<Model>,
    config: DetectorConfig,
    ring: Vec<f64>,
    /// Next write position in `ring`.
    head: usize,
    filled: usize,
    window: Vec<f32>,
    scratch: Vec<f64>,
    ambient: Option<f64>,
    decision: Label,
    agree: usize,
    next_index: usize,
}

impl DetectorState {
    pub fn new(model: Arc<Model>, config: DetectorConfig) -> Result<Self> {
        if config.hysteresis == 0 {
            return Err(HodError::InvalidInput("hysteresis must be at least 1".into()));
        }
        if !(config.ambient_alpha > 0.0 && config.ambient_alpha <= 1.0) {
            return Err(HodError::InvalidInput("ambient smoothing must be in (0, 1]".into()));
        }
        let width = model.classifier().input_width();
        let cap = match model.mode() {
            DataMode::Absolute => width,
            DataMode::Gradient => width + 1,
        };
        let scratch = vec![0.0; model.classifier().scratch_len()];
        Ok(DetectorState {
            model,
            config,
            ring: vec![0.0; cap],
            head: 0,
            filled: 0,
            window: vec![0.0; width],
            scratch,
            ambient: None,
            decision: Label::HandsOff,
            agree: 0,
            next_index: 0,
        })
    }

    pub fn decision(&self) -> Label {
        self.decision
    }

    pub fn ambient(&self) -> Option<f64> {
        self.ambient
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> DetectorConfig {
        self.config
    }

    /// Raw samples the ring holds once full.
    pub fn capacity(&self) -> usize {
        self.ring.len()
    }

    pub fn buffered(&self) -> usize {
        self.filled
    }

    /// Samples seen so far.
    pub fn samples_seen(&self) -> usize {
        self.next_index
    }

    /// Moves the ambient estimate toward `sample`; a no-op while hands-on.
    pub fn update_ambient(&mut self, sample: f64) -> Option<f64> {
        if self.decision == Label::HandsOff {
            self.ambient = Some(match self.ambient {
                None => sample,
                Some(a) => a + self.config.ambient_alpha * (sample - a),
            });
        }
        self.ambient
    }

    /// Feeds one raw sample. Returns the flip event, if any.
    pub fn push_sample(&mut self, sample: f64) -> Result<Option<DecisionEvent>> {
        if !sample.is_finite() {
            return Err(HodError::InvalidInput(format!(
                "non-finite sample {sample} at index {}",
                self.next_index
            )));
        }
        let index = self.next_index;
        self.next_index += 1;
        let cap = self.ring.len();
        self.ring[self.head] = sample;
        self.head = (self.head + 1) % cap;
        self.filled = (self.filled + 1).min(cap);
        self.update_ambient(sample);
        if self.filled < cap {
            return Ok(None);
        }

        // `head` now points at the oldest sample.
        let spec = self.model.normalization;
        match self.model.mode() {
            DataMode::Absolute => {
                for (k, w) in self.window.iter_mut().enumerate() {
                    *w = spec.apply(self.ring[(self.head + k) % cap]) as f32;
                }
            }
            DataMode::Gradient => {
                let mut prev = self.ring[self.head];
                for (k, w) in self.window.iter_mut().enumerate() {
                    let cur = self.ring[(self.head + k + 1) % cap];
                    *w = spec.apply(cur - prev) as f32;
                    prev = cur;
                }
            }
        }
        let on = self.model.classifier().predict(&self.window, &mut self.scratch);
        if on == self.decision.is_on() {
            self.agree = 0;
            return Ok(None);
        }
        self.agree += 1;
        if self.agree < self.config.hysteresis {
            return Ok(None);
        }
        self.agree = 0;
        self.decision = self.decision.flipped();
        Ok(Some(DecisionEvent {
            index,
            label: self.decision,
        }))
    }

    /// Runs a whole stream, returning every flip.
    pub fn run(&mut self, samples: &[f64]) -> Result<Vec<DecisionEvent>> {
        let mut out = Vec::new();
        for &s in samples {
            if let Some(e) = self.push_sample(s)? {
                out.push(e);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBody;
    use crate::nn::TdnnModel;
    use crate::preprocess::NormalizationSpec;

    /// Hands-on when the summed normalized gradient over the window exceeds 0.5.
    fn rise_detector(hysteresis: usize) -> DetectorState {
        let mut m = TdnnModel::zeros(100, 1);
        m.hidden.weights.fill(1.0);
        m.hidden.biases[0] = -0.5;
        m.output.weights[0] = 20.0;
        let model = Model::new(ModelBody::Tdnn(m), NormalizationSpec::gradient(1.0).unwrap());
        DetectorState::new(
            Arc::new(model),
            DetectorConfig {
                hysteresis,
                ..DetectorConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn warm_up_emits_nothing() {
        let mut d = rise_detector(1);
        assert_eq!(d.capacity(), 101);
        for i in 0..100 {
            assert_eq!(d.push_sample(i as f64).unwrap(), None);
            assert!(d.buffered() <= d.capacity());
        }
        assert_eq!(d.decision(), Label::HandsOff);
    }

    #[test]
    fn constant_stream_never_flips() {
        let mut d = rise_detector(5);
        assert!(d.run(&vec![50.0; 30_000]).unwrap().is_empty());
        assert_eq!(d.ambient(), Some(50.0));
    }

    #[test]
    fn step_flips_after_hysteresis() {
        let mut v = vec![0.0; 200];
        v.extend(vec![1.0; 150]);
        for h in [1, 3, 7] {
            let mut d = rise_detector(h);
            let ev = d.run(&v).unwrap();
            assert_eq!(ev.len(), 2, "h={h}: {ev:?}");
            // The step is seen at index 200; the flip needs h agreeing windows.
            assert_eq!(
                ev[0],
                DecisionEvent {
                    index: 200 + h - 1,
                    label: Label::HandsOn
                }
            );
            // It leaves the 100-gradient window at index 300.
            assert_eq!(
                ev[1],
                DecisionEvent {
                    index: 300 + h - 1,
                    label: Label::HandsOff
                }
            );
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut d = rise_detector(1);
        assert!(d.push_sample(f64::NAN).is_err());
        assert!(d.push_sample(f64::INFINITY).is_err());
        assert_eq!(d.samples_seen(), 0);
    }

    #[test]
    fn ambient_converges_and_freezes() {
        let mut d = rise_detector(1);
        for _ in 0..10_000 {
            d.update_ambient(7.0);
        }
        assert!((d.ambient().unwrap() - 7.0).abs() < 1e-12);
        d.decision = Label::HandsOn;
        let before = d.ambient();
        for _ in 0..100 {
            d.update_ambient(1e3);
        }
        assert_eq!(d.ambient(), before);
    }

    #[test]
    fn ambient_tracks_slow_drift() {
        // +0.1 %/min of a 50 pF level, 2 ms samples, 5 minutes.
        let (c0, dt, alpha) = (50.0, 0.002, DEFAULT_AMBIENT_ALPHA);
        let slope = c0 * 0.001 / 60.0 * dt;
        let mut d = rise_detector(1);
        let n = 150_000;
        for i in 0..n {
            d.update_ambient(c0 + slope * i as f64);
        }
        let truth = c0 + slope * (n - 1) as f64;
        let est = d.ambient().unwrap();
        // Steady-state lag of an EMA on a ramp is slope·(1 − α)/α samples.
        let lag = slope * (1.0 - alpha) / alpha;
        assert!((truth - est - lag).abs() < 1e-9, "{} vs {}", truth - est, lag);
        assert!((truth - est).abs() / truth < 0.01);
    }

    #[test]
    fn rejects_bad_config() {
        let model = Arc::new(Model::new(
            ModelBody::Tdnn(TdnnModel::zeros(100, 1)),
            NormalizationSpec::gradient(1.0).unwrap(),
        ));
        assert!(DetectorState::new(
            model.clone(),
            DetectorConfig {
                hysteresis: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(DetectorState::new(
            model,
            DetectorConfig {
                ambient_alpha: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
