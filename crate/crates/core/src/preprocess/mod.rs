//! Edge labelling, fixed-width windows and normalization.

pub mod dataset;

use std::fmt;
use std::str::FromStr;

use crate::error::{HodError, Result};
use crate::sim::{label_at, Interval, Label, SampleSeries};

pub use dataset::{parse_hodw, read_hodw, write_hodw, Dataset};

/// Samples per classifier input: 200 ms at 2 ms.
pub const WINDOW_WIDTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub index: usize,
    pub direction: EdgeDirection,
    /// `|v[i] - v[i-1]|`.
    pub magnitude: f64,
}

pub type LabeledSegment = Interval;

/// Every sample whose step from its predecessor exceeds `threshold`.
pub fn detect_edges(values: &[f64], threshold: f64) -> Result<Vec<EdgeEvent>> {
    if !(threshold > 0.0) {
        return Err(HodError::InvalidInput(format!(
            "edge threshold must be > 0, got {threshold}"
        )));
    }
    Ok(values
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let d = w[1] - w[0];
            (d.abs() > threshold).then(|| EdgeEvent {
                index: i + 1,
                direction: if d > 0.0 {
                    EdgeDirection::Rising
                } else {
                    EdgeDirection::Falling
                },
                magnitude: d.abs(),
            })
        })
        .collect())
}

/// Segments the series into hands-off / hands-on runs. The series starts
/// hands-off; a rising edge while off switches to on and a falling edge while
/// on switches back. Edges that would not change the label, or that arrive
/// within `debounce` samples of the last accepted edge, are ignored.
pub fn auto_label(series: &SampleSeries, threshold: f64, debounce: usize) -> Result<Vec<LabeledSegment>> {
    let edges = detect_edges(&series.values, threshold)?;
    let n = series.len();
    let mut segments = Vec::new();
    if n == 0 {
        return Ok(segments);
    }
    let mut label = Label::HandsOff;
    let mut start = 0;
    let mut last_accepted: Option<usize> = None;
    for e in edges {
        let wanted = match e.direction {
            EdgeDirection::Rising => Label::HandsOn,
            EdgeDirection::Falling => Label::HandsOff,
        };
        if wanted == label {
            continue;
        }
        if let Some(prev) = last_accepted {
            if e.index - prev <= debounce {
                continue;
            }
        }
        if e.index > start {
            segments.push(Interval {
                start,
                end: e.index,
                label,
            });
        }
        start = e.index;
        label = wanted;
        last_accepted = Some(e.index);
    }
    segments.push(Interval { start, end: n, label });
    Ok(segments)
}

/// Robust sensor-noise estimate from first differences (MAD scaled for a
/// Gaussian, divided by √2 for differencing).
pub fn estimate_noise_sigma(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let mut diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mid = diffs.len() / 2;
    let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    *median / (0.674_489_75 * std::f64::consts::SQRT_2)
}

/// Default edge threshold: five times the estimated noise sigma.
pub fn default_edge_threshold(values: &[f64]) -> f64 {
    let t = 5.0 * estimate_noise_sigma(values);
    if t > 0.0 {
        t
    } else {
        f64::MIN_POSITIVE
    }
}

/// First differences `g[i] = v[i+1] - v[i]`.
pub fn to_gradient(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(HodError::InvalidInput(format!(
            "gradient needs at least 2 values, got {}",
            values.len()
        )));
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataMode {
    Absolute,
    Gradient,
}

impl DataMode {
    pub fn code(self) -> u8 {
        match self {
            DataMode::Absolute => 0,
            DataMode::Gradient => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DataMode::Absolute),
            1 => Some(DataMode::Gradient),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::Absolute => "absolute",
            DataMode::Gradient => "gradient",
        }
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataMode {
    type Err = HodError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(DataMode::Absolute),
            "gradient" => Ok(DataMode::Gradient),
            other => Err(HodError::InvalidInput(format!("unknown data mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationSpec {
    /// Maps `[min, max]` onto `[0, 1]`.
    Absolute { min: f64, max: f64 },
    /// Divides by the largest expected per-step change and clamps to `[-1, 1]`.
    Gradient { max_rate: f64 },
}

impl NormalizationSpec {
    pub fn absolute(min: f64, max: f64) -> Result<Self> {
        let s = NormalizationSpec::Absolute { min, max };
        s.validate()?;
        Ok(s)
    }

    pub fn gradient(max_rate: f64) -> Result<Self> {
        let s = NormalizationSpec::Gradient { max_rate };
        s.validate()?;
        Ok(s)
    }

    pub fn mode(&self) -> DataMode {
        match self {
            NormalizationSpec::Absolute { .. } => DataMode::Absolute,
            NormalizationSpec::Gradient { .. } => DataMode::Gradient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormalizationSpec::Absolute { min, max } if min.is_finite() && max.is_finite() && min < max => Ok(()),
            NormalizationSpec::Gradient { max_rate } if max_rate.is_finite() && max_rate > 0.0 => Ok(()),
            other => Err(HodError::InvalidInput(format!("degenerate normalization {other:?}"))),
        }
    }

    /// The two scalars stored in a model header.
    pub fn params(&self) -> (f64, f64) {
        match *self {
            NormalizationSpec::Absolute { min, max } => (min, max),
            NormalizationSpec::Gradient { max_rate } => (max_rate, 0.0),
        }
    }

    pub fn from_params(mode: DataMode, a: f64, b: f64) -> Result<Self> {
        match mode {
            DataMode::Absolute => NormalizationSpec::absolute(a, b),
            DataMode::Gradient => NormalizationSpec::gradient(a),
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            NormalizationSpec::Absolute { min, max } => (v - min) / (max - min),
            NormalizationSpec::Gradient { max_rate } => (v / max_rate).clamp(-1.0, 1.0),
        }
    }
}

pub fn normalize(values: &[f64], spec: &NormalizationSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(values.iter().map(|&v| spec.apply(v)).collect())
}

/// Fits a normalization to a raw series. Absolute mode spans the observed
/// range; gradient mode takes the `quantile` of absolute per-step changes.
pub fn fit_normalization(values: &[f64], mode: DataMode, quantile: f64) -> Result<NormalizationSpec> {
    match mode {
        DataMode::Absolute => {
            let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            NormalizationSpec::absolute(lo, hi)
        }
        DataMode::Gradient => {
            let mut g: Vec<f64> = to_gradient(values)?.into_iter().map(f64::abs).collect();
            let k = ((g.len() - 1) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
            let (_, q, _) = g.select_nth_unstable_by(k, f64::total_cmp);
            NormalizationSpec::gradient(*q)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<f32>,
    pub label: Label,
    /// Raw-series index of the newest sample in the window.
    pub source_index: usize,
}

/// Windows of `width` over `values`, advancing by `stride`. Each window is
/// labeled from `segments` at its last index. `index_offset` is added to
/// positions before the label lookup (1 when `values` are gradients).
pub fn sliding_windows(
    values: &[f64],
    segments: &[Interval],
    width: usize,
    stride: usize,
    index_offset: usize,
) -> Vec<Window> {
    if width == 0 || stride == 0 || values.len() < width {
        return Vec::new();
    }
    (0..=values.len() - width)
        .step_by(stride)
        .map(|k| {
            let last = k + width - 1 + index_offset;
            Window {
                values: values[k..k + width].iter().map(|&v| v as f32).collect(),
                label: label_at(segments, last),
                source_index: last,
            }
        })
        .collect()
}

pub fn window_count(len: usize, width: usize, stride: usize) -> usize {
    if width == 0 || stride == 0 || len < width {
        0
    } else {
        (len - width) / stride + 1
    }
}

/// Full preprocessing of one series into a dataset: optional gradient,
/// normalization, windowing at stride 1. In gradient mode a window holds
/// 100 differences spanning 101 raw samples.
pub fn build_dataset(
    series: &SampleSeries,
    segments: &[Interval],
    spec: &NormalizationSpec,
    width: usize,
) -> Result<Dataset> {
    let (inputs, offset) = match spec.mode() {
        DataMode::Absolute => (normalize(&series.values, spec)?, 0),
        DataMode::Gradient => (normalize(&to_gradient(&series.values)?, spec)?, 1),
    };
    let mut ds = Dataset::new(width);
    if inputs.len() < width {
        return Ok(ds);
    }
    ds.reserve(inputs.len() - width + 1);
    for k in 0..=inputs.len() - width {
        let last = k + width - 1 + offset;
        ds.push_f64(&inputs[k..k + width], label_at(segments, last));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> SampleSeries {
        SampleSeries::unlabeled(0.002, values)
    }

    #[test]
    fn no_edges_on_constant() {
        assert!(detect_edges(&[3.0; 50], 0.1).unwrap().is_empty());
        assert!(detect_edges(&[], 0.1).unwrap().is_empty());
        assert!(detect_edges(&[1.0], 0.0).is_err());
    }

    #[test]
    fn single_step_edge() {
        let e = detect_edges(&[0.0, 0.0, 5.0, 5.0], 1.0).unwrap();
        assert_eq!(
            e,
            vec![EdgeEvent {
                index: 2,
                direction: EdgeDirection::Rising,
                magnitude: 5.0
            }]
        );
    }

    #[test]
    fn label_without_edges() {
        let s = series(vec![1.0; 20]);
        let seg = auto_label(&s, 0.5, 0).unwrap();
        assert_eq!(
            seg,
            vec![Interval {
                start: 0,
                end: 20,
                label: Label::HandsOff
            }]
        );
    }

    #[test]
    fn label_rise_then_fall() {
        let mut v = vec![0.0; 10];
        v.extend([4.0; 10]);
        v.extend([0.0; 10]);
        let seg = auto_label(&series(v), 1.0, 2).unwrap();
        let got: Vec<_> = seg.iter().map(|s| (s.start, s.end, s.label)).collect();
        assert_eq!(
            got,
            vec![
                (0, 10, Label::HandsOff),
                (10, 20, Label::HandsOn),
                (20, 30, Label::HandsOff)
            ]
        );
    }

    #[test]
    fn debounce_suppresses_chatter() {
        // on at 5, spurious drop at 7, genuine release at 20
        let mut v = vec![0.0; 5];
        v.extend([3.0, 3.0]);
        v.extend([1.0; 13]);
        v.extend([-2.0; 5]);
        let seg = auto_label(&series(v.clone()), 1.5, 3).unwrap();
        assert_eq!(seg.len(), 3);
        assert_eq!(seg[1].start, 5);
        assert_eq!(seg[2].start, 20);
        let noisy = auto_label(&series(v), 1.5, 0).unwrap();
        assert_eq!(noisy[2].start, 7);
    }

    #[test]
    fn window_counts() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(sliding_windows(&v, &[], 100, 1, 0).len(), 1);
        let v: Vec<f64> = (0..150).map(f64::from).collect();
        let w = sliding_windows(&v, &[], 100, 1, 0);
        assert_eq!(w.len(), 51);
        assert_eq!(w[0].values[1..], w[1].values[..99]);
        assert!(sliding_windows(&v[..99], &[], 100, 1, 0).is_empty());
    }

    #[test]
    fn window_label_from_last_sample() {
        let seg = vec![
            Interval {
                start: 0,
                end: 120,
                label: Label::HandsOff,
            },
            Interval {
                start: 120,
                end: 200,
                label: Label::HandsOn,
            },
        ];
        let v = vec![0.0; 200];
        let w = sliding_windows(&v, &seg, 100, 1, 0);
        assert_eq!(w[20].label, Label::HandsOff);
        assert_eq!(w[20].source_index, 119);
        assert_eq!(w[21].label, Label::HandsOn);
    }

    #[test]
    fn gradient_basics() {
        assert_eq!(to_gradient(&[2.0; 5]).unwrap(), vec![0.0; 4]);
        let ramp: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        assert!(to_gradient(&ramp).unwrap().iter().all(|&g| g == 0.5));
        assert!(to_gradient(&[1.0]).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        let a = NormalizationSpec::absolute(2.0, 6.0).unwrap();
        assert_eq!(normalize(&[2.0, 6.0, 4.0], &a).unwrap(), vec![0.0, 1.0, 0.5]);
        let g = NormalizationSpec::gradient(0.5).unwrap();
        assert_eq!(
            normalize(&[0.5, -0.5, 1.0, -3.0], &g).unwrap(),
            vec![1.0, -1.0, 1.0, -1.0]
        );
        assert!(NormalizationSpec::absolute(1.0, 1.0).is_err());
        assert!(NormalizationSpec::gradient(0.0).is_err());
        assert!(NormalizationSpec::gradient(f64::NAN).is_err());
    }

    #[test]
    fn noise_estimate_recovers_sigma() {
        use rand_distr::{Distribution, Normal};
        let mut rng = crate::rng::rng_from(5);
        let n = Normal::new(10.0, 0.2).unwrap();
        let v: Vec<f64> = (0..20_000).map(|_| n.sample(&mut rng)).collect();
        let s = estimate_noise_sigma(&v);
        assert!((s - 0.2).abs() < 0.01, "{s}");
    }

    #[test]
    fn gradient_dataset_uses_101_samples() {
        let v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let s = series(v);
        let ds = build_dataset(&s, &s.truth, &NormalizationSpec::gradient(2.0).unwrap(), 100).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.row(0).iter().all(|&x| x == 0.5));
    }

    proptest! {
        #[test]
        fn window_count_formula(n in 0usize..400) {
            let v = vec![0.0; n];
            prop_assert_eq!(sliding_windows(&v, &[], 100, 1, 0).len(), n.saturating_sub(99));
            prop_assert_eq!(window_count(n, 100, 1), n.saturating_sub(99));
        }

        #[test]
        fn gradient_inverts_cumsum(inc in prop::collection::vec(-1000i32..1000, 1..200), start in -50i32..50) {
            let mut acc = start as f64;
            let mut v = vec![acc];
            for d in &inc {
                acc += *d as f64;
                v.push(acc);
            }
            let g = to_gradient(&v).unwrap();
            let expect: Vec<f64> = inc.iter().map(|&d| d as f64).collect();
            prop_assert_eq!(g, expect);
        }

        #[test]
        fn normalize_is_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3, rate in 1e-3f64..1e2) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for spec in [NormalizationSpec::absolute(-10.0, 25.0).unwrap(), NormalizationSpec::gradient(rate).unwrap()] {
                prop_assert!(spec.apply(lo) <= spec.apply(hi));
            }
        }

        #[test]
        fn auto_label_alternates(steps in prop::collection::vec(-3.0f64..3.0, 2..300), debounce in 0usize..5) {
            let mut acc = 0.0;
            let v: Vec<f64> = steps.iter().map(|d| { acc += d; acc }).collect();
            let seg = auto_label(&series(v.clone()), 1.0, debounce).unwrap();
            prop_assert_eq!(seg[0].start, 0);
            prop_assert_eq!(seg.last().unwrap().end, v.len());
            prop_assert_eq!(seg[0].label, Label::HandsOff);
            for w in seg.windows(2) {
                prop_assert!(w[0].label != w[1].label);
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert!(w[0].start < w[0].end);
            }
        }
    }
}
