//! Command-line front end: simulate, preprocess, train, evaluate, bench and
//! detect. Every command that writes an artifact also writes
//! `<artifact>.manifest.json` holding the effective configuration, the seed
//! and a SHA-256 of the configuration.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::detector::{
    default_contact_threshold, latency_summary, DecisionEvent, DetectorConfig, DetectorState, LatencySummary,
    ReactionRecord, ReactionTracker, DEFAULT_AMBIENT_ALPHA, EVENTS_CSV_HEADER,
};
use crate::error::{HodError, Result};
use crate::eval::{
    evaluate, format_bytes, format_duration, format_grid_table, metrics, run_grid, time_inference, write_grid_csv,
    GridSpec, Metrics, PreparedData,
};
use crate::forest::TreeParams;
use crate::model::{fit, FitConfig, Model, ModelKind, ModelSpec};
use crate::nn::{Optimizer, TrainConfig};
use crate::preprocess::{
    auto_label, build_dataset, default_edge_threshold, fit_normalization, read_hodw, write_hodw, DataMode,
    NormalizationSpec, WINDOW_WIDTH,
};
use crate::sim::{csv as series_csv, simulate_scenario, CircuitParams, Label, SampleSeries, TouchScenario};
use crate::synth::{self, balance, CorpusSpec};

#[derive(Debug, Parser)]
#[command(name = "hod", version, about = "Capacitive hands-on detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a touch scenario into a capacitance CSV.
    Simulate(SimulateArgs),
    /// Label, normalize and window a capacitance CSV into an HODW dataset.
    Preprocess(PreprocessArgs),
    /// Train one classifier on an HODW dataset.
    Train(TrainArgs),
    /// Score a trained model on an HODW dataset.
    Evaluate(EvaluateArgs),
    /// Train and score the benchmark grid in both data modes.
    Bench(BenchArgs),
    /// Run the streaming detector over a series and report reaction times.
    Detect(DetectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Absolute,
    Gradient,
}

impl From<ModeArg> for DataMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Absolute => DataMode::Absolute,
            ModeArg::Gradient => DataMode::Gradient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Tdnn,
    Lstm,
    Rf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Tdnn => ModelKind::Tdnn,
            ModelArg::Lstm => ModelKind::Lstm,
            ModelArg::Rf => ModelKind::Forest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        }
    }
}

/// Network training flags shared by `train` and `bench`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct NetworkArgs {
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Heavy-ball momentum (sgd only).
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Independent initializations; the best on validation is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

impl NetworkArgs {
    fn apply(&self, cfg: &mut FitConfig) {
        cfg.train.epochs = self.epochs;
        cfg.train.optimizer = self.optimizer.into();
        cfg.train.learning_rate = self.lr;
        cfg.train.momentum = self.momentum;
        cfg.train.batch_size = self.batch_size;
        cfg.restarts = self.restarts;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two-finger touches at the typical grip points, 2 s on / 2 s off (30 min).
    TwoFinger,
    /// Ten two-finger touches (40 s).
    TenTouch,
    /// Randomized grips with hovers, for training (300 s).
    Corpus,
    /// Ever lighter grips, then a hover without contact (34 s).
    LightTouchDrift,
}

impl Preset {
    fn scenario(self, duration: Option<f64>, seed: u64) -> Result<TouchScenario> {
        match self {
            Preset::TwoFinger => Ok(synth::two_finger_stream(duration.unwrap_or(1800.0), 2.0, 2.0)),
            Preset::TenTouch => Ok(synth::two_finger_stream(duration.unwrap_or(40.0), 2.0, 2.0)),
            Preset::Corpus => synth::corpus_scenario(
                &CorpusSpec {
                    duration: duration.unwrap_or(300.0),
                    ..CorpusSpec::default()
                },
                seed,
            ),
            Preset::LightTouchDrift => {
                let mut s = synth::light_touch_drift_scenario();
                if let Some(d) = duration {
                    s.total_duration = d;
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario config file; overrides --preset.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "two-finger")]
    pub preset: Preset,
    /// Preset length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "gradient")]
    pub mode: ModeArg,
    /// Edge threshold per step, in capacitance units [default: 5× noise sigma].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Samples after an accepted edge during which further edges are ignored.
    #[arg(long, default_value_t = 50)]
    pub debounce: usize,
    #[arg(long, default_value_t = WINDOW_WIDTH)]
    pub window: usize,
    /// Quantile of absolute steps used as the gradient scale.
    #[arg(long, default_value_t = synth::DEFAULT_RATE_QUANTILE)]
    pub rate_quantile: f64,
    /// Drop majority-class windows until both classes are equally frequent.
    #[arg(long)]
    pub balance: bool,
    /// Label from the series' truth column instead of detected edges.
    #[arg(long)]
    pub use_truth: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Hidden units, or estimators for a forest.
    #[arg(long)]
    pub size: usize,
    /// Features per split (forest only).
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    /// Expected data mode; refused when the dataset was built otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = WINDOW_WIDTH)]
    pub window: usize,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub repetitions: usize,
    /// Write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Capacitance CSV; a training corpus is simulated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Length of the simulated corpus, seconds.
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
    /// Restrict to these model kinds.
    #[arg(long, value_enum)]
    pub only: Vec<ModelArg>,
    /// Restrict to one data mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Restrict network hidden sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub debounce: usize,
    #[arg(long, default_value_t = WINDOW_WIDTH)]
    pub window: usize,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid CSV; the text table goes next to it with a `.txt` suffix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Capacitance CSV, or `-` for one value per line on standard input.
    #[arg(long)]
    pub input: String,
    /// Expected data mode; refused when the model was trained otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Contact threshold for reaction timing, in capacitance units
    /// [default: a quarter of the way up from the CSV's low to its high level].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = crate::detector::DEFAULT_HYSTERESIS)]
    pub hysteresis: usize,
    /// Sample period of standard-input streams, seconds.
    #[arg(long, default_value_t = TouchScenario::DEFAULT_SAMPLE_PERIOD)]
    pub sample_period: f64,
    #[arg(long, default_value_t = WINDOW_WIDTH)]
    pub window: usize,
    /// Also write the event CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the latency summary as JSON here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Detect(a) => cmd_detect(&a),
    }
}

/// `<path>.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn json_err(e: serde_json::Error) -> HodError {
    HodError::InvalidInput(format!("json: {e}"))
}

fn write_manifest<C: Serialize>(
    artifact: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
    extra: serde_json::Value,
) -> Result<()> {
    let config = serde_json::to_value(config).map_err(json_err)?;
    let hash = sha256_hex(&serde_json::to_vec(&config).map_err(json_err)?);
    let manifest = json!({
        "tool": "hod",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "config_sha256": hash,
        "outputs": extra,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(json_err)?;
    std::fs::write(manifest_path(artifact), text + "\n")?;
    Ok(())
}

fn read_manifest(artifact: &Path) -> Result<serde_json::Value> {
    let path = manifest_path(artifact);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| HodError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(json_err)
}

fn normalization_json(spec: &NormalizationSpec) -> serde_json::Value {
    let (a, b) = spec.params();
    json!({ "mode": spec.mode().as_str(), "a": a, "b": b })
}

fn normalization_from_manifest(m: &serde_json::Value) -> Result<NormalizationSpec> {
    let n = &m["outputs"]["normalization"];
    let bad = || HodError::InvalidInput("dataset manifest lacks a normalization record".into());
    let mode: DataMode = n["mode"].as_str().ok_or_else(bad)?.parse()?;
    NormalizationSpec::from_params(mode, n["a"].as_f64().ok_or_else(bad)?, n["b"].as_f64().ok_or_else(bad)?)
}

/// Writes through a temporary sibling and renames, so a failed run leaves
/// no partial artifact behind.
fn write_atomically(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(std::fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn read_series(path: &Path) -> Result<SampleSeries> {
    let f = File::open(path).map_err(|e| HodError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    series_csv::read_series_csv(BufReader::new(f))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (scenario, source) = match &a.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| HodError::InvalidInput(format!("cannot read {}: {e}", p.display())))?;
            (TouchScenario::parse(&text)?, p.display().to_string())
        }
        None => (a.preset.scenario(a.duration, a.seed)?, format!("{:?}", a.preset)),
    };
    let series = simulate_scenario(&scenario, &CircuitParams::default(), a.seed)?;
    write_atomically(&a.out, |w| series_csv::write_series_csv(&series, w))?;
    let config_text = scenario.to_config();
    write_manifest(
        &a.out,
        "simulate",
        Some(a.seed),
        a,
        json!({
            "samples": series.len(),
            "sample_period": series.sample_period,
            "scenario_source": source,
            "scenario_sha256": sha256_hex(config_text.as_bytes()),
            "scenario": config_text,
            "truth_intervals": series.truth.iter().filter(|t| t.label.is_on()).map(|t| [t.start, t.end]).collect::<Vec<_>>(),
        }),
    )?;
    eprintln!("wrote {} samples to {}", series.len(), a.out.display());
    Ok(())
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    if a.window == 0 {
        return Err(HodError::InvalidInput("window must be positive".into()));
    }
    let series = read_series(&a.input)?;
    let threshold = a.threshold.unwrap_or_else(|| default_edge_threshold(&series.values));
    let segments = if a.use_truth {
        series.truth.clone()
    } else {
        auto_label(&series, threshold, a.debounce)?
    };
    let normalization = fit_normalization(&series.values, a.mode.into(), a.rate_quantile)?;
    let mut ds = build_dataset(&series, &segments, &normalization, a.window)?;
    if a.balance {
        ds = balance(&ds, a.seed);
    }
    if ds.is_empty() {
        eprintln!("warning: series of {} samples yields no windows", series.len());
    }
    write_atomically(&a.out, |w| write_hodw(&ds, w))?;
    write_manifest(
        &a.out,
        "preprocess",
        Some(a.seed),
        a,
        json!({
            "windows": ds.len(),
            "positives": ds.positives(),
            "edge_threshold": threshold,
            "normalization": normalization_json(&normalization),
        }),
    )?;
    eprintln!(
        "wrote {} windows ({} hands-on) to {}",
        ds.len(),
        ds.positives(),
        a.out.display()
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(crate::preprocess::Dataset, NormalizationSpec)> {
    let f = File::open(path).map_err(|e| HodError::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let ds = read_hodw(BufReader::new(f))?;
    let norm = normalization_from_manifest(&read_manifest(path)?)?;
    Ok((ds, norm))
}

fn load_model(path: &Path) -> Result<Model> {
    let bytes =
        std::fs::read(path).map_err(|e| HodError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Model::from_bytes(&bytes)
}

fn check_mode(expected: Option<ModeArg>, actual: DataMode, what: &str) -> Result<()> {
    match expected.map(DataMode::from) {
        Some(m) if m != actual => Err(HodError::InvalidInput(format!(
            "{what} uses {actual} data but --mode {m} was requested"
        ))),
        _ => Ok(()),
    }
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f05": m.f_half,
    })
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (ds, normalization) = load_dataset(&a.data)?;
    check_mode(a.mode, normalization.mode(), "the dataset")?;
    if ds.width() != a.window {
        return Err(HodError::InvalidInput(format!(
            "dataset windows are {} wide, --window is {}",
            ds.width(),
            a.window
        )));
    }
    let mut cfg = FitConfig {
        train: TrainConfig {
            seed: a.seed,
            validation_fraction: a.validation_fraction,
            ..TrainConfig::default()
        },
        tree: TreeParams {
            max_features: a.features,
            ..TreeParams::default()
        },
        restarts: 1,
    };
    a.network.apply(&mut cfg);
    let spec = ModelSpec {
        kind: a.model.into(),
        size: a.size,
    };
    let (model, report) = fit(spec, &ds, normalization, &cfg)?;
    let cm = evaluate(model.classifier(), &ds, Some(&report.validation_indices))?;
    let m = metrics(&cm)?;
    let bytes = model.to_bytes()?;
    write_atomically(&a.out, |w| Ok(w.write_all(&bytes)?))?;
    let fp = model.footprint();
    let report_json = json!({
        "model": spec.kind.as_str(),
        "size": spec.size,
        "mode": normalization.mode().as_str(),
        "validation": metrics_json(&m),
        "confusion": { "tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn_ },
        "parameter_count": fp.parameter_count,
        "serialized_bytes": fp.serialized_bytes,
        "training_seconds": report.wall_time.as_secs_f64(),
        "history": serde_json::to_value(&report.history).map_err(json_err)?,
        "model_sha256": sha256_hex(&bytes),
    });
    let mut report_path = a.out.as_os_str().to_owned();
    report_path.push(".report.json");
    std::fs::write(
        PathBuf::from(report_path),
        serde_json::to_string_pretty(&report_json).map_err(json_err)? + "\n",
    )?;
    write_manifest(
        &a.out,
        "train",
        Some(a.seed),
        a,
        json!({ "data_manifest": read_manifest(&a.data)?, "model_sha256": sha256_hex(&bytes) }),
    )?;
    eprintln!(
        "{} {} trained in {:.1} s: validation accuracy {:.4}, {} bytes",
        spec.kind,
        spec.size,
        report.wall_time.as_secs_f64(),
        m.accuracy,
        bytes.len()
    );
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (ds, normalization) = load_dataset(&a.data)?;
    if normalization.mode() != model.mode() {
        return Err(HodError::InvalidInput(format!(
            "model expects {} data, dataset is {}",
            model.mode(),
            normalization.mode()
        )));
    }
    let cm = evaluate(model.classifier(), &ds, None)?;
    let m = metrics(&cm)?;
    let step = (ds.len() / 64).max(1);
    let windows: Vec<&[f32]> = (0..ds.len()).step_by(step).take(64).map(|i| ds.row(i)).collect();
    let t = time_inference(model.classifier(), &windows, a.repetitions);
    let fp = model.footprint();
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
    println!(
        "{} {} ({}): accuracy {} precision {} recall {} F0.5 {} memory {} exec {}",
        model.kind().display_name(),
        model.size_param(),
        model.mode(),
        pct(Some(m.accuracy)),
        pct(m.precision),
        pct(m.recall),
        pct(m.f_half),
        format_bytes(fp.serialized_bytes),
        format_duration(t)
    );
    if let Some(out) = &a.out {
        let report = json!({
            "model": model.kind().as_str(),
            "size": model.size_param(),
            "mode": model.mode().as_str(),
            "metrics": metrics_json(&m),
            "confusion": { "tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn_ },
            "memory_bytes": fp.serialized_bytes,
            "exec_time_us": t * 1e6,
        });
        std::fs::write(out, serde_json::to_string_pretty(&report).map_err(json_err)? + "\n")?;
        write_manifest(out, "evaluate", None, a, json!({}))?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let (series, edge_threshold) = match &a.input {
        Some(p) => {
            let s = read_series(p)?;
            let t = a.threshold.unwrap_or_else(|| default_edge_threshold(&s.values));
            (s, t)
        }
        None => {
            let spec = CorpusSpec {
                duration: a.duration,
                ..CorpusSpec::default()
            };
            let scenario = synth::corpus_scenario(&spec, a.seed)?;
            let s = simulate_scenario(&scenario, &CircuitParams::default(), a.seed)?;
            (s, a.threshold.unwrap_or(spec.edge_threshold))
        }
    };
    let segments = auto_label(&series, edge_threshold, a.debounce)?;
    let modes: Vec<DataMode> = match a.mode {
        Some(m) => vec![m.into()],
        None => vec![DataMode::Absolute, DataMode::Gradient],
    };
    let prepare = |mode: DataMode| -> Result<PreparedData> {
        let normalization = fit_normalization(&series.values, mode, synth::DEFAULT_RATE_QUANTILE)?;
        let ds = build_dataset(&series, &segments, &normalization, a.window)?;
        Ok(PreparedData {
            dataset: balance(&ds, a.seed),
            normalization,
        })
    };
    let absolute = modes
        .contains(&DataMode::Absolute)
        .then(|| prepare(DataMode::Absolute))
        .transpose()?;
    let gradient = modes
        .contains(&DataMode::Gradient)
        .then(|| prepare(DataMode::Gradient))
        .transpose()?;

    let mut spec = GridSpec {
        modes,
        seed: a.seed,
        ..GridSpec::default()
    };
    if !a.only.is_empty() {
        spec.kinds = a.only.iter().map(|&k| k.into()).collect();
    }
    if !a.sizes.is_empty() {
        spec.hidden_sizes = a.sizes.clone();
    }
    a.network.apply(&mut spec.fit);
    let rows = run_grid(absolute.as_ref(), gradient.as_ref(), &spec);
    write_atomically(&a.out, |w| write_grid_csv(&rows, w))?;
    let table = format_grid_table(&rows);
    let mut txt = a.out.as_os_str().to_owned();
    txt.push(".txt");
    std::fs::write(PathBuf::from(txt), &table)?;
    print!("{table}");
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    write_manifest(
        &a.out,
        "bench",
        Some(a.seed),
        a,
        json!({ "rows": rows.len(), "failed_cells": failed, "edge_threshold": edge_threshold }),
    )?;
    if failed > 0 {
        eprintln!("{failed} grid cells failed; see the table");
    }
    Ok(())
}

fn format_latency_line(kind: Label, s: Option<LatencySummary>, events: usize) -> String {
    match s {
        Some(s) => format!(
            "hands-{kind}: {events} events, latency min {:.1} ms, median {:.1} ms, max {:.1} ms, {} missed",
            s.min * 1e3,
            s.median * 1e3,
            s.max * 1e3,
            s.missed
        ),
        None => format!("hands-{kind}: {events} events, no latency measured"),
    }
}

fn event_line(e: &DecisionEvent, sample_period: f64, latency: Option<f64>) -> String {
    format!(
        "{},{:.6},{},{}",
        e.index,
        e.index as f64 * sample_period,
        e.label,
        latency.map(|l| format!("{:.3}", l * 1e3)).unwrap_or_default()
    )
}

pub fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    check_mode(a.mode, model.mode(), "the model")?;
    if model.classifier().input_width() != a.window {
        return Err(HodError::InvalidInput(format!(
            "model windows are {} wide, --window is {}",
            model.classifier().input_width(),
            a.window
        )));
    }
    let mut detector = DetectorState::new(
        Arc::new(model),
        DetectorConfig {
            hysteresis: a.hysteresis,
            ambient_alpha: DEFAULT_AMBIENT_ALPHA,
        },
    )?;

    // A CSV is read whole so the default contact threshold can be taken
    // from it; standard input is processed line by line.
    let (preloaded, sample_period) = if a.input == "-" {
        (None, a.sample_period)
    } else {
        let s = read_series(Path::new(&a.input))?;
        let p = s.sample_period;
        (Some(s.values), p)
    };
    let threshold = a
        .threshold
        .or_else(|| preloaded.as_deref().and_then(default_contact_threshold));
    let mut tracker = threshold.map(|t| ReactionTracker::new(t, sample_period)).transpose()?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut file = a
        .out
        .as_ref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()?;
    writeln!(out, "{EVENTS_CSV_HEADER}")?;
    if let Some(f) = file.as_mut() {
        writeln!(f, "{EVENTS_CSV_HEADER}")?;
    }

    let mut records: Vec<ReactionRecord> = Vec::new();
    let mut counts = [0usize; 2];
    let mut step = |i: usize, v: f64, out: &mut dyn Write, file: &mut Option<BufWriter<File>>| -> Result<()> {
        let event = detector.push_sample(v)?;
        let mut latency = None;
        if let Some(t) = tracker.as_mut() {
            for r in t.observe(i, v, detector.decision(), event).into_iter().flatten() {
                if event.is_some() && r.decision_index == Some(i) {
                    latency = r.latency;
                }
                records.push(r);
            }
        }
        if let Some(e) = event {
            counts[usize::from(e.label.is_on())] += 1;
            let line = event_line(&e, sample_period, latency);
            writeln!(out, "{line}")?;
            if let Some(f) = file.as_mut() {
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    };
    match preloaded {
        Some(values) => {
            for (i, &v) in values.iter().enumerate() {
                step(i, v, &mut out, &mut file)?;
            }
        }
        None => {
            let stdin = io::stdin();
            let mut i = 0;
            for (n, line) in stdin.lock().lines().enumerate() {
                let Some(v) = series_csv::parse_value_line(&line?, n + 1)? else {
                    continue;
                };
                step(i, v, &mut out, &mut file)?;
                out.flush()?;
                i += 1;
            }
        }
    }
    if let Some(t) = tracker.as_mut() {
        records.extend(t.finish());
    }
    if let Some(mut f) = file {
        f.flush()?;
    }

    let on = latency_summary(&records, Label::HandsOn);
    let off = latency_summary(&records, Label::HandsOff);
    eprintln!("{}", format_latency_line(Label::HandsOn, on, counts[1]));
    eprintln!("{}", format_latency_line(Label::HandsOff, off, counts[0]));
    if let Some(path) = &a.summary {
        let s = |x: Option<LatencySummary>, n: usize| {
            json!({
                "events": n,
                "latencies_measured": x.map(|s| s.count),
                "missed": x.map(|s| s.missed),
                "min_ms": x.map(|s| s.min * 1e3),
                "median_ms": x.map(|s| s.median * 1e3),
                "max_ms": x.map(|s| s.max * 1e3),
            })
        };
        let summary = json!({
            "contact_threshold": threshold,
            "hands_on": s(on, counts[1]),
            "hands_off": s(off, counts[0]),
        });
        std::fs::write(path, serde_json::to_string_pretty(&summary).map_err(json_err)? + "\n")?;
        write_manifest(path, "detect", None, a, json!({}))?;
    }
    Ok(())
}
