//! Synthetic capacitance streams.
//!
//! The sensor capacitance is the untouched base `C_s0` plus two first-order
//! components that follow a scripted hand: a proximity term that ramps up
//! while the hand approaches and a contact term that rises once the skin
//! touches the rim. While in contact the driver's body also couples mains
//! interference into the mat, which shows up as a small periodic dip in the
//! contact term. Values are reported in picofarads.

pub mod csv;
pub mod physics;
pub mod scenario;

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{HodError, Result};
use crate::rng::{derive_seed, rng_from, tag};

pub use physics::{
    capacitance_from_frequency, plate_capacitance, resonant_frequency, CircuitParams, PlateModel, EPSILON_0,
};
pub use scenario::{ClockPosition, ContactModel, Side, TouchEvent, TouchKind, TouchScenario};

/// Farads to the picofarad units used by [`SampleSeries`].
pub const PF: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Label {
    #[default]
    HandsOff,
    HandsOn,
}

impl Label {
    pub fn is_on(self) -> bool {
        self == Label::HandsOn
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::HandsOff => Label::HandsOn,
            Label::HandsOn => Label::HandsOff,
        }
    }

    pub fn from_on(on: bool) -> Label {
        if on {
            Label::HandsOn
        } else {
            Label::HandsOff
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::HandsOff => "off",
            Label::HandsOn => "on",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open index range `[start, end)` carrying one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }
}

/// Uniformly sampled capacitance trace with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    pub sample_period: f64,
    /// Capacitance in pF.
    pub values: Vec<f64>,
    /// Ordered, non-overlapping, covering `0..values.len()`.
    pub truth: Vec<Interval>,
}

impl SampleSeries {
    /// A series with a single hands-off interval.
    pub fn unlabeled(sample_period: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        SampleSeries {
            sample_period,
            values,
            truth: vec![Interval {
                start: 0,
                end: n,
                label: Label::HandsOff,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 * self.sample_period
    }

    pub fn label_at(&self, index: usize) -> Label {
        label_at(&self.truth, index)
    }

    /// Per-sample truth labels.
    pub fn labels(&self) -> Vec<Label> {
        let mut out = vec![Label::HandsOff; self.len()];
        for iv in &self.truth {
            for l in &mut out[iv.start..iv.end.min(self.len())] {
                *l = iv.label;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(HodError::InvalidInput("series is empty".into()));
        }
        if !(self.sample_period > 0.0) {
            return Err(HodError::InvalidInput("sample period must be > 0".into()));
        }
        let mut at = 0;
        for iv in &self.truth {
            if iv.start != at || iv.end <= iv.start {
                return Err(HodError::InvalidInput(format!(
                    "truth intervals do not partition the series at {at}"
                )));
            }
            at = iv.end;
        }
        if at != self.values.len() {
            return Err(HodError::InvalidInput("truth intervals do not cover the series".into()));
        }
        Ok(())
    }
}

/// Label of the interval containing `index`; hands-off outside all intervals.
pub fn label_at(intervals: &[Interval], index: usize) -> Label {
    let pos = intervals.partition_point(|iv| iv.end <= index);
    match intervals.get(pos) {
        Some(iv) if iv.contains(index) => iv.label,
        _ => Label::HandsOff,
    }
}

/// Builds a partition of `0..n` from per-sample labels, merging runs.
pub fn intervals_from_labels(labels: &[Label]) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.label == l => last.end = i + 1,
            _ => out.push(Interval {
                start: i,
                end: i + 1,
                label: l,
            }),
        }
    }
    out
}

fn ramp_target(e: &TouchEvent, t: f64, approach: f64) -> (f64, f64) {
    let up = |x: f64| {
        if approach > 0.0 {
            (x / approach).clamp(0.0, 1.0)
        } else if x >= 0.0 {
            1.0
        } else {
            0.0
        }
    };
    if e.hover {
        let (s, end) = (e.start, e.end());
        if t < s || t >= end {
            return (0.0, 0.0);
        }
        (up(t - s).min(up(end - t)), 0.0)
    } else {
        let (s, end) = (e.start, e.end());
        if t < s {
            (up(t - (s - approach)), 0.0)
        } else if t < end {
            (1.0, 1.0)
        } else {
            (1.0 - up(t - end), 0.0)
        }
    }
}

/// Renders a scenario into a noisy capacitance trace.
pub fn simulate_scenario(scenario: &TouchScenario, circuit: &CircuitParams, seed: u64) -> Result<SampleSeries> {
    scenario.validate()?;
    circuit.validate()?;
    let n = scenario.num_samples();
    let dt = scenario.sample_period;
    let contact = &scenario.contact;
    let alpha = 1.0 - (-dt / scenario.rise_time_constant).exp();
    let settle = contact.approach_time + 20.0 * scenario.rise_time_constant;
    let mut rng = rng_from(derive_seed(seed, tag::SIMULATION));

    let deltas = scenario
        .events
        .iter()
        .map(|e| contact.touch_delta(e.kind, e.position, e.side).map(|d| d * PF))
        .collect::<Result<Vec<f64>>>()?;
    let phases: Vec<f64> = scenario
        .events
        .iter()
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let noise = Normal::new(0.0, scenario.noise_sigma * PF).map_err(|e| HodError::Scenario(format!("noise: {e}")))?;

    let base = circuit.base_sensor_capacitance * PF;
    let hum_pf = contact.hum_amplitude * PF;
    let omega = 2.0 * PI * contact.hum_frequency;
    let frac = contact.approach_fraction;

    let mut proximity = 0.0;
    let mut touching = 0.0;
    let mut hum = 0.0;
    // Phase of the most recent contact; the dip decays with it after release.
    let mut phase = 0.0;
    let mut first = 0;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        while first < scenario.events.len() && scenario.events[first].end() + settle <= t {
            first += 1;
        }
        let (mut prox_target, mut touch_target, mut hum_target) = (0.0, 0.0, 0.0);
        for (j, e) in scenario.events.iter().enumerate().skip(first) {
            if e.start - contact.approach_time > t {
                break;
            }
            let (p, k) = ramp_target(e, t, contact.approach_time);
            let d = deltas[j];
            if d * frac * p > prox_target {
                prox_target = d * frac * p;
            }
            if k > 0.0 {
                touch_target = d * (1.0 - frac);
                hum_target = hum_pf.min(touch_target);
                phase = phases[j];
            }
        }
        proximity += (prox_target - proximity) * alpha;
        touching += (touch_target - touching) * alpha;
        hum += (hum_target - hum) * alpha;
        let dip = hum.min(touching) * 0.5 * (1.0 - (omega * t + phase).cos());
        let mut v = base + proximity + touching - dip;
        if scenario.noise_sigma > 0.0 {
            v += noise.sample(&mut rng);
        }
        values.push(v);
    }

    let mut labels = vec![Label::HandsOff; n];
    for e in scenario.events.iter().filter(|e| !e.hover) {
        let s = ((e.start / dt).round() as usize).min(n);
        let end = ((e.end() / dt).round() as usize).min(n);
        for l in &mut labels[s..end] {
            *l = Label::HandsOn;
        }
    }
    Ok(SampleSeries {
        sample_period: dt,
        values,
        truth: intervals_from_labels(&labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mut s: TouchScenario) -> TouchScenario {
        s.noise_sigma = 0.0;
        s
    }

    #[test]
    fn empty_scenario_is_flat() {
        let s = quiet(TouchScenario::new(2.0));
        let c = CircuitParams::default();
        let out = simulate_scenario(&s, &c, 7).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.values.iter().all(|&v| v == 50.0));
        assert_eq!(
            out.truth,
            vec![Interval {
                start: 0,
                end: 1000,
                label: Label::HandsOff
            }]
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let s = TouchScenario::alternating(TouchKind::OneHand, &TouchScenario::typical_points(), 1.0, 1.0, 10.0);
        let c = CircuitParams::default();
        let a = simulate_scenario(&s, &c, 3).unwrap();
        let b = simulate_scenario(&s, &c, 3).unwrap();
        let other = simulate_scenario(&s, &c, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, other.values);
    }

    #[test]
    fn alternation_produces_six_touches() {
        let s = TouchScenario::alternating(
            TouchKind::TwoFinger,
            &[(ClockPosition::Ten, Side::Front)],
            5.0,
            5.0,
            60.0,
        );
        let out = simulate_scenario(&s, &CircuitParams::default(), 1).unwrap();
        assert_eq!(out.len(), 30_000);
        let on: Vec<_> = out.truth.iter().filter(|iv| iv.label.is_on()).collect();
        assert_eq!(on.len(), 6);
        assert!(out.truth.windows(2).all(|w| w[0].label != w[1].label));
        out.validate().unwrap();
    }

    #[test]
    fn clean_values_stay_within_contact_range() {
        let mut s = quiet(TouchScenario::alternating(
            TouchKind::TwoHands,
            &TouchScenario::typical_points(),
            0.7,
            0.4,
            18.9,
        ));
        s.events.push(TouchEvent {
            hover: true,
            ..TouchEvent::touch(TouchKind::TwoHands, ClockPosition::Ten, Side::Front, 19.2, 0.5)
        });
        s.total_duration = 20.0;
        let c = CircuitParams::default();
        let out = simulate_scenario(&s, &c, 11).unwrap();
        let max_delta = s
            .events
            .iter()
            .map(|e| s.contact.touch_delta(e.kind, e.position, e.side).unwrap() * PF)
            .fold(0.0, f64::max);
        assert!(out
            .values
            .iter()
            .all(|&v| (50.0..=50.0 + max_delta + 1e-9).contains(&v)));
    }

    #[test]
    fn touch_reaches_full_delta() {
        let s = quiet(TouchScenario::alternating(
            TouchKind::OneHand,
            &[(ClockPosition::Twelve, Side::Front)],
            2.0,
            1.0,
            3.0,
        ));
        let out = simulate_scenario(&s, &CircuitParams::default(), 0).unwrap();
        let delta = s
            .contact
            .touch_delta(TouchKind::OneHand, ClockPosition::Twelve, Side::Front)
            .unwrap()
            * PF;
        // Late in the hold only the mains dip separates the trace from base + delta.
        let late = &out.values[1300..1490];
        let hum = s.contact.hum_amplitude * PF;
        assert!(late
            .iter()
            .all(|&v| v <= 50.0 + delta + 1e-9 && v >= 50.0 + delta - hum - 1e-3));
    }

    #[test]
    fn hover_is_labeled_off() {
        let mut s = quiet(TouchScenario::new(2.0));
        s.events.push(TouchEvent {
            hover: true,
            ..TouchEvent::touch(TouchKind::TwoHands, ClockPosition::Two, Side::Front, 0.5, 1.0)
        });
        let out = simulate_scenario(&s, &CircuitParams::default(), 0).unwrap();
        assert_eq!(out.truth.len(), 1);
        let peak = out.values.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 50.5, "hover should still raise capacitance, peak {peak}");
    }

    #[test]
    fn label_lookup() {
        let ivs = intervals_from_labels(&[Label::HandsOff, Label::HandsOn, Label::HandsOn, Label::HandsOff]);
        assert_eq!(ivs.len(), 3);
        assert_eq!(label_at(&ivs, 2), Label::HandsOn);
        assert_eq!(label_at(&ivs, 3), Label::HandsOff);
        assert_eq!(label_at(&ivs, 99), Label::HandsOff);
    }
}
