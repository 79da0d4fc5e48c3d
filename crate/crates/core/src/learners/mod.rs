//! Nuisance learners.
//!
//! Every learner is described by a [`LearnerSpec`], fitted with [`fit`] into a
//! [`FittedLearner`], and queried through [`FittedLearner::predict`].
//! Regressors return real predictions; classifiers return probabilities of
//! class 1.

mod autoencoder;
mod forest;
mod lasso;
mod logistic;
pub mod mlp;
mod ols;

pub use autoencoder::{fit_autoencoder, Autoencoder, AutoencoderConfig};
pub use forest::{fit_forest, Forest, ForestConfig, Tree};
pub use lasso::{fit_lasso, lambda_grid, lambda_max};
pub use logistic::{fit_logistic, fit_logistic_l1};
pub use mlp::{fit_mlp, Activation, MlpConfig, Network, Task};
pub use ols::fit_ols;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of cross-validation folds used for penalty selection.
pub const CV_FOLDS: usize = 5;
/// Length of the default penalty grid.
pub const GRID_LEN: usize = 50;
/// Smallest grid value as a fraction of the null-model penalty.
pub const GRID_RATIO: f64 = 1e-4;

/// How an L1 penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Fixed(f64),
    /// 5-fold cross-validation over `grid`, or over the default log-spaced grid
    /// from the null-model penalty down when `grid` is `None`.
    CrossValidated { grid: Option<Vec<f64>> },
}

impl Penalty {
    pub fn cv() -> Self {
        Penalty::CrossValidated { grid: None }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Penalty::Fixed(l) if !(*l >= 0.0) => Err(Error::InvalidSpec(format!("penalty {l} < 0"))),
            Penalty::CrossValidated { grid: Some(g) } if g.is_empty() => {
                Err(Error::InvalidSpec("empty penalty grid".into()))
            }
            Penalty::CrossValidated { grid: Some(g) } if g.iter().any(|l| !(*l >= 0.0)) => {
                Err(Error::InvalidSpec("negative value in penalty grid".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Ols,
    Lasso { penalty: Penalty },
    LogisticL2 { lambda: f64 },
    LogisticL1 { penalty: Penalty },
    MlpReg(MlpConfig),
    MlpClf(MlpConfig),
    ForestReg(ForestConfig),
    ForestClf(ForestConfig),
}

impl LearnerSpec {
    pub fn is_classifier(&self) -> bool {
        matches!(
            self,
            LearnerSpec::LogisticL2 { .. }
                | LearnerSpec::LogisticL1 { .. }
                | LearnerSpec::MlpClf(_)
                | LearnerSpec::ForestClf(_)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Ols => "ols",
            LearnerSpec::Lasso { .. } => "lasso",
            LearnerSpec::LogisticL2 { .. } => "logistic_l2",
            LearnerSpec::LogisticL1 { .. } => "logistic_l1",
            LearnerSpec::MlpReg(_) => "mlp_reg",
            LearnerSpec::MlpClf(_) => "mlp_clf",
            LearnerSpec::ForestReg(_) => "forest_reg",
            LearnerSpec::ForestClf(_) => "forest_clf",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Ols => Ok(()),
            LearnerSpec::Lasso { penalty } | LearnerSpec::LogisticL1 { penalty } => penalty.validate(),
            LearnerSpec::LogisticL2 { lambda } if !(*lambda >= 0.0) => {
                Err(Error::InvalidSpec(format!("lambda {lambda} < 0")))
            }
            LearnerSpec::LogisticL2 { .. } => Ok(()),
            LearnerSpec::MlpReg(c) | LearnerSpec::MlpClf(c) => c.validate(),
            LearnerSpec::ForestReg(c) | LearnerSpec::ForestClf(c) => c.validate(),
        }
    }
}

/// `intercept + x · coef` on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coef
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Count of coefficients with magnitude above `tol`.
    pub fn nonzero(&self, tol: f64) -> usize {
        self.coef.iter().filter(|b| b.abs() > tol).count()
    }

    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.coef.len()).filter(|&j| self.coef[j].abs() > tol).collect()
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearModel),
    Logistic(LinearModel),
    Network(Box<mlp::FittedNetwork>),
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalty in effect (chosen by CV when one was requested).
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FittedLearner {
    pub spec: LearnerSpec,
    pub model: Model,
    pub diagnostics: Diagnostics,
    pub n_features: usize,
}

impl FittedLearner {
    pub fn is_classifier(&self) -> bool {
        self.spec.is_classifier()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        Ok(match &self.model {
            Model::Linear(m) => m.linear_predictor(x),
            Model::Logistic(m) => m
                .linear_predictor(x)
                .into_iter()
                .map(crate::linalg::sigmoid)
                .collect(),
            Model::Network(net) => net.predict(x),
            Model::Forest(f) => f.predict(x),
        })
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.model {
            Model::Linear(m) | Model::Logistic(m) => Some(m),
            _ => None,
        }
    }
}

fn check_inputs(x: &DMatrix<f64>, target: &[f64], classifier: bool) -> Result<()> {
    if x.nrows() != target.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            found: target.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidSpec("empty training set".into()));
    }
    if x.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::Numerics("non-finite training input".into()));
    }
    if classifier && target.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidSpec("classification target must be 0/1".into()));
    }
    Ok(())
}

/// Fits `spec` on features `x` and `target` (0/1 for classifiers).
pub fn fit(spec: &LearnerSpec, x: &DMatrix<f64>, target: &[f64], seed: u64) -> Result<FittedLearner> {
    spec.validate()?;
    check_inputs(x, target, spec.is_classifier())?;
    match spec {
        LearnerSpec::Ols => fit_ols(x, target),
        LearnerSpec::Lasso { penalty } => fit_lasso(x, target, penalty, seed),
        LearnerSpec::LogisticL2 { lambda } => fit_logistic(x, target, *lambda),
        LearnerSpec::LogisticL1 { penalty } => fit_logistic_l1(x, target, penalty, seed),
        LearnerSpec::MlpReg(c) => fit_mlp(x, target, c, Task::Regression, seed),
        LearnerSpec::MlpClf(c) => fit_mlp(x, target, c, Task::Classification, seed),
        LearnerSpec::ForestReg(c) => fit_forest(x, target, c, false, seed),
        LearnerSpec::ForestClf(c) => fit_forest(x, target, c, true, seed),
    }
}
