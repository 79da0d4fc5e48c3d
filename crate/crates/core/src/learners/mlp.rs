//! Fully connected networks trained with Adam.
//!
//! Parameters live in one flat vector (per layer: a column-major `in × out`
//! weight block followed by `out` biases), which keeps the optimizer and the
//! finite-difference checks simple.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Diagnostics, FittedLearner, LearnerSpec, Model};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, softplus, standardize};
use crate::rng::{normal, seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut DMatrix<f64>) {
        if self == Activation::Relu {
            m.apply(|v| *v = v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Squared loss.
    Regression,
    /// Logistic loss on a single sigmoid output.
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    /// Four hidden ReLU layers of width 50.
    fn default() -> Self {
        Self::new(4, 50)
    }
}

impl MlpConfig {
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            hidden: vec![width; depth],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            patience: 10,
            validation_fraction: 0.1,
        }
    }

    /// The 100-layer, width-50 network used in the original complex-confounding study.
    pub fn deep() -> Self {
        Self::new(100, 50)
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidSpec("MLP needs depth >= 1 and width >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidSpec("MLP needs lr > 0, epochs >= 1, batch >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::InvalidSpec("validation fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Dense feed-forward network with per-layer activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

impl Network {
    /// He-initialized network with layer widths `sizes` (input first) and one
    /// activation per non-input layer.
    pub fn new(sizes: &[usize], activations: &[Activation], rng: &mut Rng) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1);
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);
        let mut params = vec![0.0; total];
        for (l, w) in sizes.windows(2).enumerate() {
            let scale = (2.0 / w[0] as f64).sqrt();
            for p in &mut params[offsets[l]..offsets[l] + w[0] * w[1]] {
                *p = normal(rng) * scale;
            }
        }
        Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params,
            offsets,
        }
    }

    pub fn layers(&self) -> usize {
        self.activations.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, l: usize) -> DMatrixView<'_, f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        DMatrixView::from_slice(&self.params[self.offsets[l]..self.offsets[l] + i * o], i, o)
    }

    fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l] + i * o;
        &self.params[start..start + o]
    }

    fn layer(&self, l: usize, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = input * self.weights(l);
        for (j, b) in self.bias(l).iter().enumerate() {
            z.column_mut(j).add_scalar_mut(*b);
        }
        self.activations[l].apply(&mut z);
        z
    }

    /// Output of layer `upto` (1-based count of applied layers).
    pub fn forward_to(&self, x: &DMatrix<f64>, upto: usize) -> DMatrix<f64> {
        let mut a = x.clone();
        for l in 0..upto {
            a = self.layer(l, &a);
        }
        a
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_to(x, self.layers())
    }

    /// Mean loss on a batch: `(1/2B)‖η − y‖²` for regression, mean binary
    /// cross-entropy of `sigmoid(η)` for classification.
    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, task: Task) -> f64 {
        batch_loss(&self.forward(x), y, task)
    }

    /// Loss and its gradient with respect to [`Network::params`].
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, task: Task) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.backprop(x, y, task, &mut grad);
        (loss, grad)
    }

    fn backprop(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, task: Task, grad: &mut [f64]) -> f64 {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.clone());
        for l in 0..layers {
            let next = self.layer(l, &acts[l]);
            acts.push(next);
        }
        let out = &acts[layers];
        let loss = batch_loss(out, y, task);
        let b = x.nrows() as f64;
        let mut delta = match task {
            Task::Regression => (out - y) / b,
            Task::Classification => out.zip_map(y, |e, t| (sigmoid(e) - t) / b),
        };
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l];
            {
                let mut gw = DMatrixViewMut::from_slice(&mut grad[start..start + i * o], i, o);
                gw.gemm_tr(1.0, &acts[l], &delta, 0.0);
            }
            for j in 0..o {
                grad[start + i * o + j] = delta.column(j).sum();
            }
            if l > 0 {
                let mut back = &delta * self.weights(l).transpose();
                if self.activations[l - 1] == Activation::Relu {
                    back.zip_apply(&acts[l], |d, a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
                }
                delta = back;
            }
        }
        loss
    }
}

fn batch_loss(out: &DMatrix<f64>, y: &DMatrix<f64>, task: Task) -> f64 {
    let b = out.nrows() as f64;
    match task {
        Task::Regression => 0.5 * (out - y).norm_squared() / b,
        Task::Classification => out.zip_fold(y, 0.0, |acc, e, t| acc + softplus(e) - t * e) / b,
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

pub(crate) struct TrainStats {
    pub best_loss: f64,
    pub epochs: usize,
    pub stopped_early: bool,
}

/// Mini-batch Adam with early stopping on a held-out split. The parameters
/// with the best validation loss are restored at the end.
pub(crate) fn train(
    net: &mut Network,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    task: Task,
    cfg: &MlpConfig,
    rng: &mut Rng,
) -> Result<TrainStats> {
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = if n >= 10 {
        ((n as f64 * cfg.validation_fraction).round() as usize).min(n - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let (xv, yv) = if n_val > 0 {
        (x.select_rows(val_idx), y.select_rows(val_idx))
    } else {
        (x.select_rows(&train_idx), y.select_rows(&train_idx))
    };

    let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
    let mut grad = vec![0.0; net.params.len()];
    let mut best = f64::INFINITY;
    let mut best_params = net.params.clone();
    let mut since_best = 0;
    let mut epochs = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let xb = x.select_rows(batch);
            let yb = y.select_rows(batch);
            let loss = net.backprop(&xb, &yb, task, &mut grad);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.update(&mut net.params, &grad);
        }
        epochs = epoch + 1;
        let val = net.loss(&xv, &yv, task);
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if val < best * (1.0 - 1e-4) || (best.is_infinite() && val.is_finite()) {
            best = val;
            best_params.copy_from_slice(&net.params);
            since_best = 0;
        } else {
            if val < best {
                best = val;
                best_params.copy_from_slice(&net.params);
            }
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    net.params = best_params;
    Ok(TrainStats {
        best_loss: best,
        epochs,
        stopped_early,
    })
}

/// Trained network plus the input/target scaling it was trained under.
#[derive(Debug, Clone)]
pub struct FittedNetwork {
    pub network: Network,
    pub task: Task,
    x_means: Vec<f64>,
    x_sds: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
}

impl FittedNetwork {
    fn scale_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_means[j]) / self.x_sds[j])
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let out = self.network.forward(&self.scale_inputs(x));
        match self.task {
            Task::Regression => out.iter().map(|v| v * self.y_sd + self.y_mean).collect(),
            Task::Classification => out.iter().map(|&v| sigmoid(v)).collect(),
        }
    }
}

/// Fits an MLP; inputs are standardized internally and, for regression, so is
/// the target.
pub fn fit_mlp(x: &DMatrix<f64>, target: &[f64], cfg: &MlpConfig, task: Task, seed: u64) -> Result<FittedLearner> {
    cfg.validate()?;
    check_inputs(x, target, task == Task::Classification)?;
    let st = standardize(x);
    let (y_mean, y_sd) = match task {
        Task::Regression => {
            let m = target.iter().sum::<f64>() / target.len() as f64;
            let var = target.iter().map(|v| (v - m).powi(2)).sum::<f64>() / target.len() as f64;
            // A constant target keeps scale 0, so predictions are exactly the constant.
            (m, if var > 1e-24 { var.sqrt() } else { 0.0 })
        }
        Task::Classification => (0.0, 1.0),
    };
    let y_scale = if y_sd > 0.0 { y_sd } else { 1.0 };
    let y = DMatrix::from_iterator(target.len(), 1, target.iter().map(|v| (v - y_mean) / y_scale));

    let mut sizes = vec![x.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut acts = vec![cfg.activation; cfg.hidden.len()];
    acts.push(Activation::Identity);
    let mut rng = seeded(seed);
    let mut net = Network::new(&sizes, &acts, &mut rng);
    let stats = train(&mut net, &st.x, &y, task, cfg, &mut rng)?;

    let spec = match task {
        Task::Regression => LearnerSpec::MlpReg(cfg.clone()),
        Task::Classification => LearnerSpec::MlpClf(cfg.clone()),
    };
    Ok(FittedLearner {
        spec,
        model: Model::Network(Box::new(FittedNetwork {
            network: net,
            task,
            x_means: st.means,
            x_sds: st.sds,
            y_mean,
            y_sd,
        })),
        diagnostics: Diagnostics {
            final_loss: stats.best_loss,
            iterations: stats.epochs,
            converged: stats.stopped_early,
            lambda: None,
        },
        n_features: x.ncols(),
    })
}
