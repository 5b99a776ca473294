//! Randomized training corpora: touch scripts with every grip, position and
//! side, hover-only approaches in between, and their labeled windows.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{HodError, Result};
use crate::preprocess::{
    auto_label, build_dataset, fit_normalization, DataMode, Dataset, NormalizationSpec, WINDOW_WIDTH,
};
use crate::rng::{derive_seed, rng_from, tag};
use crate::sim::{simulate_scenario, CircuitParams, SampleSeries, TouchEvent, TouchKind, TouchScenario};

/// Per-step change that separates contact edges from mains pickup and noise
/// in the default simulator, picofarads.
pub const DEFAULT_CORPUS_EDGE_THRESHOLD: f64 = 0.06;
/// Quantile of absolute per-step changes taken as the gradient scale.
pub const DEFAULT_RATE_QUANTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    /// Seconds of stream to script.
    pub duration: f64,
    pub kinds: Vec<TouchKind>,
    /// Range of contact durations, seconds.
    pub touch_seconds: (f64, f64),
    /// Range of pauses between contacts, seconds.
    pub pause_seconds: (f64, f64),
    /// Chance that a long enough pause contains a hover without contact.
    pub hover_probability: f64,
    pub edge_threshold: f64,
    pub debounce: usize,
    pub rate_quantile: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            duration: 300.0,
            kinds: TouchKind::ALL.to_vec(),
            touch_seconds: (1.5, 4.0),
            pause_seconds: (1.5, 4.0),
            hover_probability: 0.3,
            edge_threshold: DEFAULT_CORPUS_EDGE_THRESHOLD,
            debounce: 50,
            rate_quantile: DEFAULT_RATE_QUANTILE,
        }
    }
}

const HOVER_MARGIN: f64 = 0.5;

/// Scripts a random touch sequence that fits `spec.duration`.
pub fn corpus_scenario(spec: &CorpusSpec, seed: u64) -> Result<TouchScenario> {
    let (t0, t1) = spec.touch_seconds;
    let (p0, p1) = spec.pause_seconds;
    if spec.kinds.is_empty() || !(t0 > 0.0 && t0 <= t1) || !(p0 > 0.0 && p0 <= p1) {
        return Err(HodError::InvalidInput(format!("degenerate corpus spec {spec:?}")));
    }
    let points = TouchScenario::typical_points();
    let mut rng = rng_from(derive_seed(seed, tag::SIMULATION));
    let mut s = TouchScenario::new(spec.duration);
    let mut t = 0.0;
    loop {
        let pause = rng.random_range(p0..=p1);
        let touch = rng.random_range(t0..=t1);
        if t + pause + touch > spec.duration {
            break;
        }
        let kind = *spec.kinds.choose(&mut rng).expect("non-empty");
        let (position, side) = *points.choose(&mut rng).expect("non-empty");
        let hover_len = pause - 2.0 * HOVER_MARGIN - s.contact.approach_time;
        if hover_len > 0.3 && rng.random_bool(spec.hover_probability) {
            let hkind = *spec.kinds.choose(&mut rng).expect("non-empty");
            let (hp, hs) = *points.choose(&mut rng).expect("non-empty");
            s.events.push(TouchEvent {
                hover: true,
                ..TouchEvent::touch(hkind, hp, hs, t + HOVER_MARGIN * 0.5, hover_len)
            });
        }
        t += pause;
        s.events.push(TouchEvent::touch(kind, position, side, t, touch));
        t += touch;
    }
    s.validate()?;
    Ok(s)
}

/// Two-finger touches cycling through the typical grip points, `on` seconds
/// of contact and `off` seconds of release.
pub fn two_finger_stream(duration: f64, on: f64, off: f64) -> TouchScenario {
    TouchScenario::alternating(
        TouchKind::TwoFinger,
        &TouchScenario::typical_points(),
        on,
        off,
        duration,
    )
}

/// Ever lighter grips followed by a one-hand hover that never touches the
/// rim. A threshold placed relative to recent touch peaks ends up below the
/// hover's proximity level.
pub fn light_touch_drift_scenario() -> TouchScenario {
    use crate::sim::{ClockPosition as P, Side as S};
    let grips = [
        (TouchKind::TwoHands, P::Twelve, S::Front),
        (TouchKind::OneHand, P::Twelve, S::Front),
        (TouchKind::FourFinger, P::Ten, S::Front),
        (TouchKind::TwoFinger, P::Two, S::Front),
        (TouchKind::TwoFinger, P::Three, S::Back),
        (TouchKind::TwoFinger, P::Nine, S::Outside),
        (TouchKind::TwoFinger, P::Three, S::Back),
    ];
    let mut s = TouchScenario::new(34.0);
    let mut t = 2.0;
    for (kind, pos, side) in grips {
        s.events.push(TouchEvent::touch(kind, pos, side, t, 2.0));
        t += 4.0;
    }
    s.events.push(TouchEvent {
        hover: true,
        ..TouchEvent::touch(TouchKind::OneHand, P::Twelve, S::Front, t, 2.0)
    });
    s
}

/// Windows ready for training with the normalization that produced them.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub series: SampleSeries,
    pub dataset: Dataset,
    pub normalization: NormalizationSpec,
}

/// Simulates, auto-labels from edges, normalizes and windows one corpus.
pub fn build_corpus(spec: &CorpusSpec, mode: DataMode, seed: u64) -> Result<Corpus> {
    let scenario = corpus_scenario(spec, seed)?;
    let series = simulate_scenario(&scenario, &CircuitParams::default(), seed)?;
    let segments = auto_label(&series, spec.edge_threshold, spec.debounce)?;
    let normalization = fit_normalization(&series.values, mode, spec.rate_quantile)?;
    let dataset = build_dataset(&series, &segments, &normalization, WINDOW_WIDTH)?;
    Ok(Corpus {
        series,
        dataset,
        normalization,
    })
}

/// Drops randomly chosen rows of the majority class until both classes are
/// equally frequent. Surviving rows keep their order.
pub fn balance(ds: &Dataset, seed: u64) -> Dataset {
    let pos = ds.positives();
    let neg = ds.len() - pos;
    if pos == neg || pos == 0 || neg == 0 {
        return ds.clone();
    }
    let majority_on = pos > neg;
    let majority: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i).is_on() == majority_on).collect();
    let keep_n = pos.min(neg);
    let mut rng = rng_from(derive_seed(seed, tag::SHUFFLE));
    let mut keep = vec![false; ds.len()];
    for k in rand::seq::index::sample(&mut rng, majority.len(), keep_n) {
        keep[majority[k]] = true;
    }
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.label(i).is_on() != majority_on || keep[i])
        .collect();
    ds.subset(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_fits_and_alternates() {
        let spec = CorpusSpec {
            duration: 120.0,
            ..CorpusSpec::default()
        };
        let s = corpus_scenario(&spec, 3).unwrap();
        let touches = s.events.iter().filter(|e| !e.hover).count();
        assert!(touches >= 15, "{touches}");
        assert!(s.events.iter().any(|e| e.hover));
        assert_eq!(corpus_scenario(&spec, 3).unwrap(), s);
        assert_ne!(corpus_scenario(&spec, 4).unwrap(), s);
    }

    #[test]
    fn presets_are_valid() {
        let s = two_finger_stream(1800.0, 2.0, 2.0);
        s.validate().unwrap();
        assert_eq!(s.num_samples(), 900_000);
        assert_eq!(two_finger_stream(40.0, 2.0, 2.0).events.len(), 10);
        let d = light_touch_drift_scenario();
        d.validate().unwrap();
        assert!(d.events.last().unwrap().hover);
    }

    #[test]
    fn balanced_rows_keep_order() {
        let mut ds = Dataset::new(1);
        for i in 0..100 {
            ds.push(&[i as f32], crate::sim::Label::from_on(i % 4 == 0));
        }
        let b = balance(&ds, 1);
        assert_eq!(b.len(), 50);
        assert_eq!(b.positives(), 25);
        let order: Vec<f32> = (0..b.len()).map(|i| b.row(i)[0]).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}
