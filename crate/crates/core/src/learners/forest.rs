//! CART random forests.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Diagnostics, FittedLearner, LearnerSpec, Model};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive, seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    /// `None` grows until leaves can no longer be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            min_leaf: 5,
            bootstrap: true,
            max_features: None,
        }
    }
}

impl ForestConfig {
    pub fn with_trees(mut self, trees: usize) -> Self {
        self.trees = trees;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidSpec("forest needs at least one tree".into()));
        }
        if self.min_leaf == 0 || self.max_features == Some(0) || self.max_depth == Some(0) {
            return Err(Error::InvalidSpec("min_leaf, max_features and max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A single regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[(row, feature)] <= threshold { left } else { right },
            }
        }
    }

    /// `(feature, threshold)` of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf(_) => None,
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Average of the tree predictions (a class frequency for 0/1 targets).
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / k)
            .collect()
    }
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: Rng,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n;
        self.nodes.push(Node::Leaf(mean));

        let depth_ok = self.cfg.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || idx.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        if sse <= 1e-14 * n {
            return id;
        }
        let Some(best) = self.best_split(idx, sum) else {
            return id;
        };
        let mid = partition(idx, |i| self.x[(i, best.feature)] <= best.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Maximizes the SSE reduction `S_L²/n_L + S_R²/n_R − S²/n` over the
    /// sampled features and all midpoints between distinct values.
    fn best_split(&mut self, idx: &[usize], total: f64) -> Option<Best> {
        let d = self.x.ncols();
        let n = idx.len();
        let min_leaf = self.cfg.min_leaf;
        let base = total * total / n as f64;
        let mut best: Option<Best> = None;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(n);
        for feature in sample(&mut self.rng, d, self.mtry).into_iter() {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[(i, feature)], self.y[i])));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += sorted[k].1;
                let nl = k + 1;
                if nl < min_leaf || n - nl < min_leaf || sorted[k].0 == sorted[k + 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / (n - nl) as f64 - base;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best {
                        feature,
                        threshold: 0.5 * (sorted[k].0 + sorted[k + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if pred(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

fn grow_tree(x: &DMatrix<f64>, y: &[f64], cfg: &ForestConfig, seed: u64) -> Tree {
    let n = x.nrows();
    let d = x.ncols();
    let mut rng = seeded(seed);
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let mut g = Grower {
        x,
        y,
        cfg,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    g.grow(&mut idx, 0);
    Tree { nodes: g.nodes }
}

/// Fits a forest; tree `i` is grown from seed `seed + i`, so results do not
/// depend on the number of threads.
pub fn fit_forest(x: &DMatrix<f64>, target: &[f64], cfg: &ForestConfig, classifier: bool, seed: u64) -> Result<FittedLearner> {
    cfg.validate()?;
    check_inputs(x, target, classifier)?;
    let trees = par::map(cfg.trees, |i| grow_tree(x, target, cfg, derive(seed, i as u64)));
    let forest = Forest { trees };
    let pred = forest.predict(x);
    let loss = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / target.len() as f64;
    let spec = if classifier {
        LearnerSpec::ForestClf(cfg.clone())
    } else {
        LearnerSpec::ForestReg(cfg.clone())
    };
    Ok(FittedLearner {
        spec,
        model: Model::Forest(forest),
        diagnostics: Diagnostics {
            final_loss: loss,
            iterations: cfg.trees,
            converged: true,
            lambda: None,
        },
        n_features: x.ncols(),
    })
}
