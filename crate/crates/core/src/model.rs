//! Trained-model container and the `HODM` file format.
//!
//! Header, little-endian, 24 bytes:
//!
//! | field              | type                           |
//! |--------------------|--------------------------------|
//! | magic              | `b"HODM"`                      |
//! | version            | u16 (1)                        |
//! | model kind         | u8 (1 TDNN, 2 LSTM, 3 RF)      |
//! | normalization mode | u8 (0 absolute, 1 gradient)    |
//! | input width        | u32                            |
//! | hidden size        | u32 (RF: features per split)   |
//! | normalization      | 2 × f32 (min, max) or (max_rate, 0) |
//!
//! Network payloads are f32 parameters: hidden weights row-major, hidden
//! biases, output weights, output bias. LSTM hidden weights are four
//! `[H × (1 + H)]` gate blocks (input, forget, candidate, output), each row
//! `[w_x, w_h…]`, followed by the four gate bias blocks.
//!
//! Forest payload: u32 tree count, then per tree a u32 node count and node
//! records. A split is `u8 0, u16 feature, f32 threshold, u32 left, u32 right`;
//! a leaf is `u8 1, u8 class`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{HodError, Result};
use crate::forest::{DecisionTree, Node, RandomForestModel, TreeParams};
use crate::nn::{
    block_split, train, Classifier, EpochStats, LstmModel, Parametric, TdnnModel, TrainConfig, TrainReport,
};
use crate::preprocess::{DataMode, Dataset, NormalizationSpec};
use crate::rng::{derive_seed, rng_from, tag};
use crate::sim::Label;

pub const HODM_MAGIC: &[u8; 4] = b"HODM";
pub const HODM_VERSION: u16 = 1;
pub const HODM_HEADER_LEN: usize = 24;
const SPLIT_RECORD_LEN: usize = 15;
const LEAF_RECORD_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Tdnn,
    Lstm,
    Forest,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Tdnn => 1,
            ModelKind::Lstm => 2,
            ModelKind::Forest => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ModelKind::Tdnn),
            2 => Some(ModelKind::Lstm),
            3 => Some(ModelKind::Forest),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tdnn => "tdnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Forest => "rf",
        }
    }

    /// Table label.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Tdnn => "TDNN",
            ModelKind::Lstm => "LSTM",
            ModelKind::Forest => "RF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = HodError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdnn" => Ok(ModelKind::Tdnn),
            "lstm" => Ok(ModelKind::Lstm),
            "rf" => Ok(ModelKind::Forest),
            other => Err(HodError::InvalidInput(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Tdnn(TdnnModel),
    Lstm(LstmModel),
    Forest(RandomForestModel),
}

/// A trained classifier together with the normalization its inputs need.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub body: ModelBody,
    pub normalization: NormalizationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    /// Stored scalars for networks, nodes for forests.
    pub parameter_count: usize,
    pub serialized_bytes: usize,
}

impl Model {
    pub fn new(body: ModelBody, normalization: NormalizationSpec) -> Self {
        Model { body, normalization }
    }

    pub fn kind(&self) -> ModelKind {
        match self.body {
            ModelBody::Tdnn(_) => ModelKind::Tdnn,
            ModelBody::Lstm(_) => ModelKind::Lstm,
            ModelBody::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn mode(&self) -> DataMode {
        self.normalization.mode()
    }

    /// Hidden units, or features per split for a forest.
    pub fn size_param(&self) -> usize {
        match &self.body {
            ModelBody::Tdnn(m) => m.hidden_size(),
            ModelBody::Lstm(m) => m.hidden_size(),
            ModelBody::Forest(f) => f.max_features,
        }
    }

    pub fn classifier(&self) -> &dyn Classifier {
        match &self.body {
            ModelBody::Tdnn(m) => m,
            ModelBody::Lstm(m) => m,
            ModelBody::Forest(f) => f,
        }
    }

    pub fn footprint(&self) -> Footprint {
        match &self.body {
            ModelBody::Tdnn(m) => network_footprint(m.param_count()),
            ModelBody::Lstm(m) => network_footprint(m.param_count()),
            ModelBody::Forest(f) => Footprint {
                parameter_count: f.node_count(),
                serialized_bytes: forest_bytes(f),
            },
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let fp = self.footprint();
        let mut out = Vec::with_capacity(fp.serialized_bytes);
        out.extend_from_slice(HODM_MAGIC);
        out.extend_from_slice(&HODM_VERSION.to_le_bytes());
        out.push(self.kind().code());
        out.push(self.mode().code());
        let width = self.classifier().input_width();
        out.extend_from_slice(&u32_of(width)?.to_le_bytes());
        out.extend_from_slice(&u32_of(self.size_param())?.to_le_bytes());
        let (a, b) = self.normalization.params();
        out.extend_from_slice(&(a as f32).to_le_bytes());
        out.extend_from_slice(&(b as f32).to_le_bytes());
        match &self.body {
            ModelBody::Tdnn(m) => write_params(&mut out, m),
            ModelBody::Lstm(m) => write_params(&mut out, m),
            ModelBody::Forest(f) => {
                out.extend_from_slice(&u32_of(f.trees.len())?.to_le_bytes());
                for t in &f.trees {
                    out.extend_from_slice(&u32_of(t.nodes.len())?.to_le_bytes());
                    for n in &t.nodes {
                        match *n {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                out.push(0);
                                out.extend_from_slice(&feature.to_le_bytes());
                                out.extend_from_slice(&threshold.to_le_bytes());
                                out.extend_from_slice(&left.to_le_bytes());
                                out.extend_from_slice(&right.to_le_bytes());
                            }
                            Node::Leaf { class, .. } => {
                                out.push(1);
                                out.push(u8::from(class.is_on()));
                            }
                        }
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), fp.serialized_bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != HODM_MAGIC {
            return Err(HodError::format("HODM model", "bad magic"));
        }
        let version = r.u16()?;
        if version != HODM_VERSION {
            return Err(HodError::format("HODM model", format!("unsupported version {version}")));
        }
        let kind_code = r.u8()?;
        let kind = ModelKind::from_code(kind_code)
            .ok_or_else(|| HodError::format("HODM model", format!("unknown model kind {kind_code}")))?;
        let mode_code = r.u8()?;
        let mode = DataMode::from_code(mode_code)
            .ok_or_else(|| HodError::format("HODM model", format!("unknown normalization mode {mode_code}")))?;
        let width = r.u32()? as usize;
        let size = r.u32()? as usize;
        let a = r.f32()? as f64;
        let b = r.f32()? as f64;
        let normalization =
            NormalizationSpec::from_params(mode, a, b).map_err(|e| HodError::format("HODM model", e.to_string()))?;
        if width == 0 {
            return Err(HodError::format("HODM model", "zero input width"));
        }
        let body = match kind {
            ModelKind::Tdnn => {
                if size == 0 {
                    return Err(HodError::format("HODM model", "zero hidden size"));
                }
                let n = checked_count(TdnnModel::expected_param_count, width, size)?;
                r.expect_remaining(n * 4)?;
                let mut m = TdnnModel::zeros(width, size);
                m.set_flat_params(&r.f32_vec(n)?)?;
                ModelBody::Tdnn(m)
            }
            ModelKind::Lstm => {
                if size == 0 {
                    return Err(HodError::format("HODM model", "zero hidden size"));
                }
                let n = checked_count(|_, h| LstmModel::expected_param_count(h), width, size)?;
                r.expect_remaining(n * 4)?;
                let mut m = LstmModel::zeros(width, size);
                m.set_flat_params(&r.f32_vec(n)?)?;
                ModelBody::Lstm(m)
            }
            ModelKind::Forest => {
                let count = r.u32()? as usize;
                if count == 0 {
                    return Err(HodError::format("HODM model", "forest without trees"));
                }
                let mut trees = Vec::new();
                for _ in 0..count {
                    let nodes_len = r.u32()? as usize;
                    // Every node needs at least a leaf record.
                    if nodes_len == 0 || nodes_len > r.remaining() / LEAF_RECORD_LEN {
                        return Err(HodError::format("HODM model", format!("bad node count {nodes_len}")));
                    }
                    let mut nodes = Vec::with_capacity(nodes_len);
                    for _ in 0..nodes_len {
                        nodes.push(match r.u8()? {
                            0 => Node::Split {
                                feature: r.u16()?,
                                threshold: r.f32()?,
                                left: r.u32()?,
                                right: r.u32()?,
                            },
                            1 => Node::Leaf {
                                class: match r.u8()? {
                                    0 => Label::HandsOff,
                                    1 => Label::HandsOn,
                                    c => return Err(HodError::format("HODM model", format!("bad leaf class {c}"))),
                                },
                                class_fraction: 1.0,
                            },
                            k => return Err(HodError::format("HODM model", format!("bad node kind {k}"))),
                        });
                    }
                    let mut tree = DecisionTree { nodes, max_depth: 0 };
                    tree.validate(width)
                        .map_err(|e| HodError::format("HODM model", e.to_string()))?;
                    tree.max_depth = tree.depth();
                    trees.push(tree);
                }
                ModelBody::Forest(RandomForestModel {
                    trees,
                    max_features: size,
                    seed: 0,
                    input_width: width,
                })
            }
        };
        if r.remaining() != 0 {
            return Err(HodError::format(
                "HODM model",
                format!("{} trailing bytes", r.remaining()),
            ));
        }
        Ok(Model { body, normalization })
    }
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| HodError::InvalidInput(format!("{v} does not fit in u32")))
}

fn checked_count(f: impl Fn(usize, usize) -> usize, width: usize, size: usize) -> Result<usize> {
    // Bound dimensions before the arithmetic so hostile headers cannot overflow.
    if width > 1 << 20 || size > 1 << 12 {
        return Err(HodError::format(
            "HODM model",
            format!("implausible dimensions {width}×{size}"),
        ));
    }
    Ok(f(width, size))
}

pub fn network_footprint(parameter_count: usize) -> Footprint {
    Footprint {
        parameter_count,
        serialized_bytes: HODM_HEADER_LEN + 4 * parameter_count,
    }
}

fn forest_bytes(f: &RandomForestModel) -> usize {
    HODM_HEADER_LEN
        + 4
        + f.trees
            .iter()
            .map(|t| {
                4 + t
                    .nodes
                    .iter()
                    .map(|n| match n {
                        Node::Split { .. } => SPLIT_RECORD_LEN,
                        Node::Leaf { .. } => LEAF_RECORD_LEN,
                    })
                    .sum::<usize>()
            })
            .sum::<usize>()
}

/// Serialized size of a forest.
pub fn rf_footprint(f: &RandomForestModel) -> usize {
    forest_bytes(f)
}

fn write_params<P: Parametric>(out: &mut Vec<u8>, m: &P) {
    for s in m.param_slices() {
        for &v in s {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(HodError::format("HODM model", "truncated"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn expect_remaining(&self, n: usize) -> Result<()> {
        if self.remaining() != n {
            return Err(HodError::format(
                "HODM model",
                format!("payload is {} bytes, expected {n}", self.remaining()),
            ));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let v = self.f32()?;
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(HodError::format("HODM model", "non-finite parameter"))
                }
            })
            .collect()
    }
}

/// Returns the network in its f32-rounded form, as it would load from disk.
pub fn rounded<P: Parametric + Clone>(m: &P) -> P {
    let mut out = m.clone();
    let flat: Vec<f64> = m.flat_params().iter().map(|&v| v as f32 as f64).collect();
    out.set_flat_params(&flat).expect("same shape");
    out
}

impl From<TdnnModel> for ModelBody {
    fn from(m: TdnnModel) -> Self {
        ModelBody::Tdnn(m)
    }
}

impl From<LstmModel> for ModelBody {
    fn from(m: LstmModel) -> Self {
        ModelBody::Lstm(m)
    }
}

impl From<RandomForestModel> for ModelBody {
    fn from(m: RandomForestModel) -> Self {
        ModelBody::Forest(m)
    }
}

/// One classifier configuration: architecture plus hidden units or trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden units for networks, estimators for forests.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub train: TrainConfig,
    pub tree: TreeParams,
    /// Independent network initializations; the one with the best
    /// validation accuracy is kept. Ignored for forests.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            train: TrainConfig::default(),
            tree: TreeParams::default(),
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Empty for forests.
    pub history: Vec<EpochStats>,
    pub validation_accuracy: f64,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub wall_time: Duration,
}

/// Trains one classifier on the training blocks of `ds` and scores it on
/// the held-out blocks. Network weights are f32-rounded so the returned
/// model behaves exactly like its serialized form.
pub fn fit(
    spec: ModelSpec,
    ds: &Dataset,
    normalization: NormalizationSpec,
    cfg: &FitConfig,
) -> Result<(Model, FitReport)> {
    if spec.size == 0 {
        return Err(HodError::InvalidInput("model size must be positive".into()));
    }
    let seed = cfg.train.seed;
    if cfg.restarts == 0 {
        return Err(HodError::InvalidInput("restarts must be at least 1".into()));
    }
    let started = Instant::now();
    let mut best: Option<(ModelBody, TrainReport)> = None;
    for r in 0..if spec.kind == ModelKind::Forest {
        0
    } else {
        cfg.restarts
    } {
        // The first attempt keeps the single-run seed stream.
        let init_seed = if r == 0 { seed } else { derive_seed(seed, r as u64) };
        let mut init = rng_from(derive_seed(init_seed, tag::INIT));
        let attempt = if spec.kind == ModelKind::Tdnn {
            let (m, rep) = train(TdnnModel::new(ds.width(), spec.size, &mut init), ds, &cfg.train)?;
            (ModelBody::Tdnn(rounded(&m)), rep)
        } else {
            let (m, rep) = train(LstmModel::new(ds.width(), spec.size, &mut init), ds, &cfg.train)?;
            (ModelBody::Lstm(rounded(&m)), rep)
        };
        if best
            .as_ref()
            .is_none_or(|(_, b)| attempt.1.best_validation_accuracy > b.best_validation_accuracy)
        {
            best = Some(attempt);
        }
    }
    let (body, report) = match spec.kind {
        ModelKind::Tdnn | ModelKind::Lstm => best.expect("at least one attempt"),
        ModelKind::Forest => {
            cfg.train.validate()?;
            let (train_idx, val_idx) =
                block_split(ds.len(), cfg.train.validation_fraction, cfg.train.block_len, ds.width());
            if train_idx.is_empty() || val_idx.is_empty() {
                return Err(HodError::Training(format!(
                    "split of {} windows left an empty partition",
                    ds.len()
                )));
            }
            let forest = RandomForestModel::train(&ds.subset(&train_idx), spec.size, &cfg.tree, seed)?;
            let model = Model::new(ModelBody::Forest(forest), normalization);
            let acc = accuracy_on(model.classifier(), ds, &val_idx);
            return Ok((
                model,
                FitReport {
                    history: Vec::new(),
                    validation_accuracy: acc,
                    train_indices: train_idx,
                    validation_indices: val_idx,
                    wall_time: started.elapsed(),
                },
            ));
        }
    };
    let model = Model::new(body, normalization);
    let acc = accuracy_on(model.classifier(), ds, &report.validation_indices);
    Ok((
        model,
        FitReport {
            history: report.history,
            validation_accuracy: acc,
            train_indices: report.train_indices,
            validation_indices: report.validation_indices,
            wall_time: started.elapsed(),
        },
    ))
}

fn accuracy_on(c: &dyn Classifier, ds: &Dataset, idx: &[usize]) -> f64 {
    let mut scratch = vec![0.0; c.scratch_len()];
    let correct = idx
        .iter()
        .filter(|&&i| c.predict(ds.row(i), &mut scratch) == ds.label(i).is_on())
        .count();
    correct as f64 / idx.len().max(1) as f64
}
