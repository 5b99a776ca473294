//! Bagged CART trees with per-split feature subsampling.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{HodError, Result};
use crate::nn::Classifier;
use crate::preprocess::Dataset;
use crate::rng::{derive_seed, rng_from, tag};
use crate::sim::Label;

/// Distinct estimator counts of the benchmark grid.
pub const ESTIMATOR_GRID: [usize; 4] = [1, 5, 10, 100];
/// Benchmark forests as (estimators, features per split).
pub const FOREST_GRID: [(usize, usize); 5] = [(1, 10), (5, 10), (10, 10), (100, 10), (5, 15)];
pub const DEFAULT_MAX_DEPTH: usize = 12;
pub const DEFAULT_MIN_LEAF: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u16,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        class: Label,
        /// Share of training samples at this leaf belonging to `class`.
        /// Not persisted; decoded trees report 1.0.
        class_fraction: f32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl DecisionTree {
    pub fn leaf(class: Label) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf {
                class,
                class_fraction: 1.0,
            }],
            max_depth: 0,
        }
    }

    pub fn predict(&self, x: &[f32]) -> Label {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { class, .. } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Index of the leaf reached by `x`, or `None` if the walk takes more
    /// steps than there are nodes.
    pub fn route(&self, x: &[f32]) -> Option<usize> {
        let mut at = 0usize;
        for _ in 0..=self.nodes.len() {
            match *self.nodes.get(at)? {
                Node::Leaf { .. } => return Some(at),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = *x.get(feature as usize)?;
                    at = if v <= threshold { left as usize } else { right as usize };
                }
            }
        }
        None
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Children must point forward and features must fit `width`.
    pub fn validate(&self, width: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(HodError::InvalidInput("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
            } = *n
            {
                let (l, r) = (left as usize, right as usize);
                if l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                    return Err(HodError::InvalidInput(format!(
                        "node {i} has invalid children {l}, {r}"
                    )));
                }
                if feature as usize >= width {
                    return Err(HodError::InvalidInput(format!(
                        "node {i} splits on feature {feature} >= {width}"
                    )));
                }
                if threshold.is_nan() {
                    return Err(HodError::InvalidInput(format!("node {i} has a NaN threshold")));
                }
            }
        }
        Ok(())
    }
}

/// `1 − Σ p_c²` for two classes.
pub fn gini(negatives: usize, positives: usize) -> f64 {
    let n = (negatives + positives) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = positives as f64 / n;
    let q = negatives as f64 / n;
    1.0 - p * p - q * q
}

/// `n` indices drawn uniformly with replacement.
pub fn bootstrap_sample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_features: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_features: 10,
            max_depth: DEFAULT_MAX_DEPTH,
            min_leaf: DEFAULT_MIN_LEAF,
        }
    }
}

struct Pending {
    node: usize,
    samples: Vec<usize>,
    depth: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f32,
    impurity: f64,
}

fn best_split_on(
    ds: &Dataset,
    samples: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(f32, bool)>,
) -> Option<(f32, f64)> {
    buf.clear();
    buf.extend(samples.iter().map(|&i| (ds.row(i)[feature], ds.label(i).is_on())));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = buf.len();
    let total_pos = buf.iter().filter(|s| s.1).count();
    let mut left_pos = 0usize;
    let mut best: Option<(f32, f64)> = None;
    for k in 1..n {
        left_pos += usize::from(buf[k - 1].1);
        if buf[k - 1].0 == buf[k].0 || k < min_leaf || n - k < min_leaf {
            continue;
        }
        let right_pos = total_pos - left_pos;
        let w =
            (k as f64 * gini(k - left_pos, left_pos) + (n - k) as f64 * gini(n - k - right_pos, right_pos)) / n as f64;
        if best.is_none_or(|(_, b)| w < b) {
            let (a, b) = (buf[k - 1].0, buf[k].0);
            let mut mid = a + (b - a) / 2.0;
            if !(mid >= a && mid < b) {
                mid = a;
            }
            best = Some((mid, w));
        }
    }
    best
}

/// Grows one tree on `samples` (a multiset of row indices of `ds`).
pub fn train_tree(ds: &Dataset, samples: &[usize], params: &TreeParams, seed: u64) -> DecisionTree {
    let width = ds.width();
    let max_features = params.max_features.clamp(1, width.max(1));
    let min_leaf = params.min_leaf.max(1);
    let mut rng = rng_from(seed);
    let mut nodes: Vec<Node> = vec![Node::Leaf {
        class: Label::HandsOff,
        class_fraction: 1.0,
    }];
    let mut stack = vec![Pending {
        node: 0,
        samples: samples.to_vec(),
        depth: 0,
    }];
    let mut buf = Vec::new();
    while let Some(Pending { node, samples, depth }) = stack.pop() {
        let pos = samples.iter().filter(|&&i| ds.label(i).is_on()).count();
        let neg = samples.len() - pos;
        // Ties go to hands-off.
        let class = Label::from_on(pos > neg);
        let majority = pos.max(neg) as f64 / samples.len().max(1) as f64;
        let leaf = Node::Leaf {
            class,
            class_fraction: majority as f32,
        };
        let parent_gini = gini(neg, pos);
        if pos == 0 || neg == 0 || depth >= params.max_depth || samples.len() < 2 * min_leaf {
            nodes[node] = leaf;
            continue;
        }
        let mut best: Option<BestSplit> = None;
        for feature in sample(&mut rng, width, max_features) {
            if let Some((threshold, impurity)) = best_split_on(ds, &samples, feature, min_leaf, &mut buf) {
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        let Some(split) = best.filter(|b| b.impurity < parent_gini - 1e-12) else {
            nodes[node] = leaf;
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| ds.row(i)[split.feature] <= split.threshold);
        let l = nodes.len();
        nodes.push(leaf);
        nodes.push(leaf);
        nodes[node] = Node::Split {
            feature: split.feature as u16,
            threshold: split.threshold,
            left: l as u32,
            right: (l + 1) as u32,
        };
        stack.push(Pending {
            node: l + 1,
            samples: right,
            depth: depth + 1,
        });
        stack.push(Pending {
            node: l,
            samples: left,
            depth: depth + 1,
        });
    }
    DecisionTree {
        nodes,
        max_depth: params.max_depth,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTree>,
    pub max_features: usize,
    pub seed: u64,
    pub input_width: usize,
}

/// Seed for tree `t` of a forest trained with `seed`.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    derive_seed(derive_seed(seed, tag::FOREST), t as u64)
}

impl RandomForestModel {
    /// Trees are grown in parallel; each has its own derived seed, so the
    /// result does not depend on scheduling.
    pub fn train(ds: &Dataset, estimators: usize, params: &TreeParams, seed: u64) -> Result<Self> {
        if ds.is_empty() {
            return Err(HodError::Training("empty dataset".into()));
        }
        if estimators == 0 {
            return Err(HodError::InvalidInput("forest needs at least one tree".into()));
        }
        if ds.width() > u16::MAX as usize + 1 {
            return Err(HodError::InvalidInput("window too wide for u16 feature indices".into()));
        }
        let trees = (0..estimators)
            .into_par_iter()
            .map(|t| {
                let s = tree_seed(seed, t);
                let boot = bootstrap_sample(ds.len(), derive_seed(s, tag::BOOTSTRAP));
                train_tree(ds, &boot, params, s)
            })
            .collect();
        Ok(RandomForestModel {
            trees,
            max_features: params.max_features,
            seed,
            input_width: ds.width(),
        })
    }

    /// Majority vote; a tie is hands-off. The fraction is the share of
    /// trees that voted for the returned label.
    pub fn vote(&self, x: &[f32]) -> (Label, f64) {
        let on = self.trees.iter().filter(|t| t.predict(x).is_on()).count();
        let n = self.trees.len();
        if 2 * on > n {
            (Label::HandsOn, on as f64 / n as f64)
        } else {
            (Label::HandsOff, (n - on) as f64 / n as f64)
        }
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

impl Classifier for RandomForestModel {
    fn input_width(&self) -> usize {
        self.input_width
    }

    /// Share of trees voting hands-on.
    fn predict_proba(&self, x: &[f32], _scratch: &mut [f64]) -> f64 {
        let on = self.trees.iter().filter(|t| t.predict(x).is_on()).count();
        on as f64 / self.trees.len() as f64
    }

    fn predict(&self, x: &[f32], _scratch: &mut [f64]) -> bool {
        self.vote(x).0.is_on()
    }
}
