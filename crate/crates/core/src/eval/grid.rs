//! Train-and-score grid over model kinds, sizes and data modes.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use super::{evaluate, format_bytes, format_duration, metrics, time_inference, Metrics, MetricsReport};
use crate::error::{HodError, Result};
use crate::forest::FOREST_GRID;
use crate::model::{fit, FitConfig, ModelKind, ModelSpec};
use crate::nn::HIDDEN_GRID;
use crate::preprocess::{DataMode, Dataset, NormalizationSpec};
use crate::rng::{derive_seed, tag};

/// The last column is the forest feature count, empty for networks.
pub const GRID_CSV_HEADER: &str = "model,size,mode,accuracy,precision,recall,f05,memory_bytes,exec_time_us,features";
const FAILED_MARKER: &str = "error";

/// A dataset and the normalization that produced it.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub normalization: NormalizationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridCell {
    pub kind: ModelKind,
    pub size: usize,
    pub mode: DataMode,
    /// Features per split; forests only.
    pub features: Option<usize>,
}

impl GridCell {
    fn seed(&self, run_seed: u64) -> u64 {
        let code = (u64::from(self.kind.code()) << 56)
            | (u64::from(self.mode.code()) << 48)
            | ((self.features.unwrap_or(0) as u64 & 0xffff) << 32)
            | self.size as u64;
        derive_seed(derive_seed(run_seed, tag::GRID), code)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kinds: Vec<ModelKind>,
    pub modes: Vec<DataMode>,
    pub hidden_sizes: Vec<usize>,
    /// (estimators, features per split).
    pub forests: Vec<(usize, usize)>,
    pub seed: u64,
    /// `train.seed` is replaced by a per-cell derived seed.
    pub fit: FitConfig,
    pub timing_repetitions: usize,
    /// Validation windows fed to the timer.
    pub timing_windows: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kinds: vec![ModelKind::Tdnn, ModelKind::Lstm, ModelKind::Forest],
            modes: vec![DataMode::Absolute, DataMode::Gradient],
            hidden_sizes: HIDDEN_GRID.to_vec(),
            forests: FOREST_GRID.to_vec(),
            seed: 0,
            fit: FitConfig::default(),
            timing_repetitions: 30,
            timing_windows: 64,
        }
    }
}

impl GridSpec {
    /// Cells in table order: per mode, TDNN rows, LSTM rows, then RF rows.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for kind in [ModelKind::Tdnn, ModelKind::Lstm, ModelKind::Forest] {
                if !self.kinds.contains(&kind) {
                    continue;
                }
                match kind {
                    ModelKind::Forest => out.extend(self.forests.iter().map(|&(size, f)| GridCell {
                        kind,
                        size,
                        mode,
                        features: Some(f),
                    })),
                    _ => out.extend(self.hidden_sizes.iter().map(|&size| GridCell {
                        kind,
                        size,
                        mode,
                        features: None,
                    })),
                }
            }
        }
        out
    }
}

/// A scored cell, or the reason it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub cell: GridCell,
    pub outcome: std::result::Result<MetricsReport, String>,
}

fn run_cell(cell: GridCell, data: Option<&PreparedData>, spec: &GridSpec) -> Result<MetricsReport> {
    let data = data.ok_or_else(|| HodError::InvalidInput(format!("no {} dataset prepared", cell.mode)))?;
    if data.normalization.mode() != cell.mode {
        return Err(HodError::InvalidInput(format!(
            "{} dataset supplied for a {} cell",
            data.normalization.mode(),
            cell.mode
        )));
    }
    let mut cfg = spec.fit.clone();
    cfg.train.seed = cell.seed(spec.seed);
    if let Some(f) = cell.features {
        cfg.tree.max_features = f;
    }
    let (model, report) = fit(
        ModelSpec {
            kind: cell.kind,
            size: cell.size,
        },
        &data.dataset,
        data.normalization,
        &cfg,
    )?;
    let classifier = model.classifier();
    let cm = evaluate(classifier, &data.dataset, Some(&report.validation_indices))?;
    let step = (report.validation_indices.len() / spec.timing_windows.max(1)).max(1);
    let windows: Vec<&[f32]> = report
        .validation_indices
        .iter()
        .step_by(step)
        .take(spec.timing_windows.max(1))
        .map(|&i| data.dataset.row(i))
        .collect();
    Ok(MetricsReport {
        kind: cell.kind,
        size: cell.size,
        mode: cell.mode,
        metrics: metrics(&cm)?,
        memory_bytes: model.footprint().serialized_bytes,
        inference_time: time_inference(classifier, &windows, spec.timing_repetitions),
    })
}

/// Trains and scores every cell of `spec`. Cells run in parallel, capped by
/// the `HOD_THREADS` environment variable when set; a failing cell is
/// recorded and the rest continue. Rows come back in [`GridSpec::cells`]
/// order and, apart from timings, depend only on the seeds.
pub fn run_grid(absolute: Option<&PreparedData>, gradient: Option<&PreparedData>, spec: &GridSpec) -> Vec<GridRow> {
    let cells = spec.cells();
    let work = || {
        cells
            .par_iter()
            .map(|&cell| {
                let data = match cell.mode {
                    DataMode::Absolute => absolute,
                    DataMode::Gradient => gradient,
                };
                GridRow {
                    cell,
                    outcome: run_cell(cell, data, spec).map_err(|e| e.to_string()),
                }
            })
            .collect()
    };
    match thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("HOD_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut out: W) -> Result<()> {
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for row in rows {
        let c = row.cell;
        let features = c.features.map(|f| f.to_string()).unwrap_or_default();
        match &row.outcome {
            Ok(r) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.kind,
                c.size,
                c.mode,
                r.metrics.accuracy,
                opt(r.metrics.precision),
                opt(r.metrics.recall),
                opt(r.metrics.f_half),
                r.memory_bytes,
                r.inference_time * 1e6,
                features
            )?,
            Err(_) => writeln!(out, "{},{},{},{FAILED_MARKER},,,,,,{features}", c.kind, c.size, c.mode)?,
        }
    }
    Ok(())
}

/// Reads what [`write_grid_csv`] wrote. Failure reasons are not stored in
/// the CSV and come back as `"failed"`.
pub fn parse_grid_csv(text: &str) -> Result<Vec<GridRow>> {
    let bad = |line: usize, why: String| HodError::format("grid CSV", format!("line {line}: {why}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == GRID_CSV_HEADER => {}
        _ => return Err(bad(1, "missing header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return Err(bad(n, format!("expected 10 fields, got {}", f.len())));
        }
        let kind: ModelKind = f[0].parse().map_err(|e: HodError| bad(n, e.to_string()))?;
        let size: usize = f[1].parse().map_err(|_| bad(n, format!("bad size '{}'", f[1])))?;
        let mode: DataMode = f[2].parse().map_err(|e: HodError| bad(n, e.to_string()))?;
        let features = match f[9] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(n, format!("bad features '{s}'")))?),
        };
        let cell = GridCell {
            kind,
            size,
            mode,
            features,
        };
        if f[3] == FAILED_MARKER {
            rows.push(GridRow {
                cell,
                outcome: Err("failed".into()),
            });
            continue;
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(n, format!("bad number '{s}'")))
        };
        let maybe = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(GridRow {
            cell,
            outcome: Ok(MetricsReport {
                kind,
                size,
                mode,
                metrics: Metrics {
                    accuracy: num(f[3])?,
                    precision: maybe(f[4])?,
                    recall: maybe(f[5])?,
                    f_half: maybe(f[6])?,
                },
                memory_bytes: f[7].parse().map_err(|_| bad(n, format!("bad memory '{}'", f[7])))?,
                inference_time: num(f[8])? / 1e6,
            }),
        });
    }
    Ok(rows)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", 100.0 * x)).unwrap_or_else(|| "n/a".into())
}

/// Aligned text table, one block per data mode.
pub fn format_grid_table(rows: &[GridRow]) -> String {
    let headers = [
        "Model",
        "Size",
        "Features",
        "Accuracy",
        "Precision",
        "Recall",
        "F0.5",
        "Memory",
        "Exec. time",
    ];
    let mut out = String::new();
    for mode in [DataMode::Absolute, DataMode::Gradient] {
        let block: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.cell.mode == mode)
            .map(|r| {
                let c = r.cell;
                let features = c.features.map(|f| f.to_string()).unwrap_or_default();
                let mut cols = vec![c.kind.display_name().to_string(), c.size.to_string(), features];
                match &r.outcome {
                    Ok(m) => cols.extend([
                        pct(Some(m.metrics.accuracy)),
                        pct(m.metrics.precision),
                        pct(m.metrics.recall),
                        pct(m.metrics.f_half),
                        format_bytes(m.memory_bytes),
                        format_duration(m.inference_time),
                    ]),
                    Err(e) => cols.push(format!("FAILED: {e}")),
                }
                cols
            })
            .collect();
        if block.is_empty() {
            continue;
        }
        let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
        for row in &block {
            // A failure message spans the metric columns and is not measured.
            for (w, col) in widths
                .iter_mut()
                .zip(row.iter())
                .take(if row.len() == 4 { 3 } else { 9 })
            {
                *w = (*w).max(col.chars().count());
            }
        }
        let _ = writeln!(out, "{} data", mode);
        let line = |cols: &[String]| {
            cols.iter()
                .enumerate()
                .map(|(i, c)| format!("{c:<w$}", w = widths.get(i).copied().unwrap_or(0)))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let header_cols: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", line(&header_cols));
        for row in &block {
            let _ = writeln!(out, "{}", line(row));
        }
        out.push('\n');
    }
    out
}
