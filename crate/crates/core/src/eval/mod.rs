//! Metrics, inference timing and the benchmark grid.

mod grid;

pub use grid::{
    format_grid_table, parse_grid_csv, run_grid, write_grid_csv, GridCell, GridRow, GridSpec, PreparedData,
    GRID_CSV_HEADER,
};

use std::hint::black_box;
use std::time::Instant;

use crate::error::{HodError, Result};
use crate::model::ModelKind;
use crate::nn::Classifier;
use crate::preprocess::{DataMode, Dataset};
use crate::sim::Label;

/// Weight of recall relative to precision in the reported F-score.
pub const F_BETA: f64 = 0.5;

/// Fewest repetitions [`time_inference`] will run.
pub const MIN_TIMING_REPETITIONS: usize = 30;
const WARMUP_REPETITIONS: usize = 3;

/// Counts with hands-on as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted.is_on(), actual.is_on()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// The same matrix with hands-off treated as positive.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(HodError::Dimension {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(HodError::InvalidInput("confusion of zero samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        cm.record(p, l);
    }
    Ok(cm)
}

/// Ratios whose denominator is zero are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_half: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(1 + β²)·P·R / (β²·P + R)`; absent when both are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    (den > 0.0).then(|| (1.0 + b2) * precision * recall / den)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(HodError::InvalidInput("metrics of an empty confusion matrix".into()));
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f_half = match (precision, recall) {
        (Some(p), Some(r)) => f_beta(p, r, F_BETA),
        _ => None,
    };
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f_half,
    })
}

/// Classifies the rows `indices` of `ds` (all rows when `None`).
pub fn evaluate(classifier: &dyn Classifier, ds: &Dataset, indices: Option<&[usize]>) -> Result<ConfusionMatrix> {
    if ds.width() != classifier.input_width() {
        return Err(HodError::Dimension {
            expected: classifier.input_width(),
            actual: ds.width(),
        });
    }
    let mut scratch = vec![0.0; classifier.scratch_len()];
    let mut cm = ConfusionMatrix::default();
    let mut one = |i: usize| {
        let on = classifier.predict(ds.row(i), &mut scratch);
        cm.record(Label::from_on(on), ds.label(i));
    };
    match indices {
        Some(idx) => idx.iter().for_each(|&i| one(i)),
        None => (0..ds.len()).for_each(one),
    }
    Ok(cm)
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub kind: ModelKind,
    /// Hidden units or estimators.
    pub size: usize,
    pub mode: DataMode,
    pub metrics: Metrics,
    pub memory_bytes: usize,
    /// Median seconds per forward pass.
    pub inference_time: f64,
}

/// Returns 0.5 without looking at the input; measures harness overhead.
#[derive(Debug, Clone, Copy)]
pub struct NoopClassifier {
    pub width: usize,
}

impl Classifier for NoopClassifier {
    fn input_width(&self) -> usize {
        self.width
    }

    fn predict_proba(&self, _x: &[f32], _scratch: &mut [f64]) -> f64 {
        0.5
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn raw_timing(classifier: &dyn Classifier, windows: &[&[f32]], repetitions: usize) -> f64 {
    let mut scratch = vec![0.0; classifier.scratch_len()];
    let mut per_pass = Vec::with_capacity(repetitions);
    for rep in 0..repetitions + WARMUP_REPETITIONS {
        let start = Instant::now();
        for w in windows {
            black_box(classifier.predict_proba(black_box(w), &mut scratch));
        }
        let elapsed = start.elapsed().as_secs_f64() / windows.len() as f64;
        if rep >= WARMUP_REPETITIONS {
            per_pass.push(elapsed);
        }
    }
    median(&mut per_pass)
}

/// Median wall time of one forward pass, with the harness cost of calling a
/// no-op classifier on the same windows subtracted. Each repetition runs
/// once over every window; warm-up repetitions are discarded and fewer than
/// [`MIN_TIMING_REPETITIONS`] are raised to that minimum.
pub fn time_inference(classifier: &dyn Classifier, windows: &[&[f32]], repetitions: usize) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let reps = repetitions.max(MIN_TIMING_REPETITIONS);
    let overhead = raw_timing(
        &NoopClassifier {
            width: classifier.input_width(),
        },
        windows,
        reps,
    );
    (raw_timing(classifier, windows, reps) - overhead).max(0.0)
}

/// Human-readable byte count: `512B`, `20.4kB`.
pub fn format_bytes(bytes: usize) -> String {
    if bytes < 1000 {
        format!("{bytes}B")
    } else {
        format!("{:.1}kB", bytes as f64 / 1000.0)
    }
}

/// Microseconds below a millisecond, milliseconds above.
pub fn format_duration(seconds: f64) -> String {
    if seconds < 1e-3 {
        format!("{:.1}µs", seconds * 1e6)
    } else {
        format!("{:.2}ms", seconds * 1e3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LstmModel, TdnnModel};
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use Label::{HandsOff as Off, HandsOn as On};

    fn cm(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    #[test]
    fn symmetric_case() {
        let m = metrics(&cm(9, 1, 9, 1)).unwrap();
        assert!((m.precision.unwrap() - 0.9).abs() < 1e-15);
        assert!((m.recall.unwrap() - 0.9).abs() < 1e-15);
        assert!((m.f_half.unwrap() - 0.9).abs() < 1e-15);
        assert!((m.accuracy - 0.9).abs() < 1e-15);
    }

    #[test]
    fn f_half_of_perfect_precision_half_recall() {
        // 1.25 * 0.5 / 0.75
        assert!((f_beta(1.0, 0.5, 0.5).unwrap() - 0.833_333_333_333_333_3).abs() < 1e-12);
        let m = metrics(&cm(1, 0, 5, 1)).unwrap();
        assert!((m.f_half.unwrap() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let m = metrics(&cm(0, 0, 5, 3)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.f_half, None);
        let m = metrics(&cm(0, 4, 6, 0)).unwrap();
        assert_eq!(m.recall, None);
        assert!(metrics(&cm(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn confusion_basics() {
        let labels = [On, Off, On, Off, On];
        let all = confusion(&labels, &labels).unwrap();
        assert_eq!((all.fp, all.fn_), (0, 0));
        let inv: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
        let c = confusion(&inv, &labels).unwrap();
        assert_eq!(c, cm(0, all.tn, 0, all.tp));
        assert!(confusion(&labels[..2], &labels).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn tdnn_times_below_lstm() {
        let mut rng = rng_from(1);
        let tdnn = TdnnModel::for_windows(50, &mut rng);
        let lstm = LstmModel::new(100, 1, &mut rng);
        let rows: Vec<Vec<f32>> = (0..20).map(|i| vec![(i as f32 * 0.1).sin(); 100]).collect();
        let windows: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let t = time_inference(&tdnn, &windows, 30);
        let l = time_inference(&lstm, &windows, 30);
        assert!(t < l, "tdnn {t} lstm {l}");
    }

    #[test]
    fn noop_timing_is_near_zero() {
        let rows = vec![vec![0.0f32; 100]; 10];
        let windows: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let t = time_inference(&NoopClassifier { width: 100 }, &windows, 30);
        assert!(t < 1e-6, "{t}");
    }

    #[test]
    fn formatting() {
        assert_eq!(format_bytes(20428), "20.4kB");
        assert_eq!(format_bytes(28), "28B");
        assert_eq!(format_duration(150e-6), "150.0µs");
        assert_eq!(format_duration(0.0006), "600.0µs");
        assert_eq!(format_duration(0.0012), "1.20ms");
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (1usize..200).prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn swapping_classes_is_consistent((p, l) in labels_strategy()) {
            let p: Vec<Label> = p.into_iter().map(Label::from_on).collect();
            let l: Vec<Label> = l.into_iter().map(Label::from_on).collect();
            let c = confusion(&p, &l).unwrap();
            let pi: Vec<Label> = p.iter().map(|x| x.flipped()).collect();
            let li: Vec<Label> = l.iter().map(|x| x.flipped()).collect();
            let ci = confusion(&pi, &li).unwrap();
            prop_assert_eq!(ci, c.swapped());
            let m = metrics(&c).unwrap();
            let mi = metrics(&ci).unwrap();
            prop_assert_eq!(m.accuracy, mi.accuracy);
            prop_assert_eq!(mi.precision, ratio(c.tn, c.tn + c.fn_));
        }

        #[test]
        fn f_half_bounds(tp in 1u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let m = metrics(&cm(tp, fp, tn, fn_)).unwrap();
            let (p, r, f) = (m.precision.unwrap(), m.recall.unwrap(), m.f_half.unwrap());
            prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
            if p > r {
                prop_assert!(f > f_beta(p, r, 1.0).unwrap());
            }
            if p == r {
                prop_assert!((f - p).abs() < 1e-12);
            }
        }
    }
}
