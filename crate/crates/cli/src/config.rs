//! Run configurations. Each subcommand reads an optional TOML file into one of
//! these records and then applies its command-line flags on top.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use repcause::estimators::{EstimatorSpec, DEFAULT_LEVEL};
use repcause::intrinsic_dim::IdMethod;
use repcause::learners::{ForestConfig, LearnerSpec, MlpConfig, Penalty};
use repcause::simulate::{HcmSpec, RateSpec, ScenarioSpec};
use repcause::transforms::CurveTarget;

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Outcome,
    Propensity,
}

/// Resolves a short learner name for the given role.
pub fn learner(name: &str, role: Role, key: &str) -> Result<LearnerSpec, CliError> {
    let spec = match (name, role) {
        ("ols", Role::Outcome) => LearnerSpec::Ols,
        ("lasso", Role::Outcome) => LearnerSpec::Lasso { penalty: Penalty::cv() },
        ("logistic", Role::Propensity) => LearnerSpec::LogisticL2 { lambda: 0.0 },
        ("logistic-l1", Role::Propensity) => LearnerSpec::LogisticL1 { penalty: Penalty::cv() },
        ("mlp", Role::Outcome) => LearnerSpec::MlpReg(MlpConfig::default()),
        ("mlp", Role::Propensity) => LearnerSpec::MlpClf(MlpConfig::default()),
        ("forest", Role::Outcome) => LearnerSpec::ForestReg(ForestConfig::default()),
        ("forest", Role::Propensity) => LearnerSpec::ForestClf(ForestConfig::default()),
        _ => {
            let allowed = match role {
                Role::Outcome => "ols, lasso, mlp, forest",
                Role::Propensity => "logistic, logistic-l1, mlp, forest",
            };
            return Err(CliError::Usage(format!("{key}: unknown learner '{name}' (expected one of {allowed})")));
        }
    };
    Ok(spec)
}

fn check_learner(spec: &LearnerSpec, key: &str) -> Result<(), CliError> {
    spec.validate().map_err(|e| CliError::Usage(format!("{key}: {e}")))
}

pub fn check_estimator(spec: &EstimatorSpec, key: &str) -> Result<(), CliError> {
    match spec {
        EstimatorSpec::Naive | EstimatorSpec::Oracle => Ok(()),
        EstimatorSpec::SLearner { learner } => check_learner(learner, &format!("{key}.learner")),
        EstimatorSpec::DmlAipw { g, m, clip_eps, .. } => {
            check_learner(g, &format!("{key}.g"))?;
            check_learner(m, &format!("{key}.m"))?;
            if !(*clip_eps > 0.0 && *clip_eps < 0.5) {
                return Err(CliError::Usage(format!("{key}.clip_eps: {clip_eps} outside (0, 0.5)")));
            }
            Ok(())
        }
        EstimatorSpec::DmlPartiallingOut { l, m, .. } => {
            check_learner(l, &format!("{key}.l"))?;
            check_learner(m, &format!("{key}.m"))
        }
    }
}

pub fn check_level(level: f64, key: &str) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{key}: {level} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub seed: u64,
    pub level: f64,
    pub estimator: EstimatorSpec,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            level: DEFAULT_LEVEL,
            estimator: EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub scenario: ScenarioSpec,
    /// Fixed feature file; without it features come from the manifold generator.
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub reps: usize,
    pub level: f64,
    pub scenario: ScenarioSpec,
    pub features: Option<PathBuf>,
    pub estimators: Vec<EstimatorSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            reps: 200,
            level: DEFAULT_LEVEL,
            scenario: ScenarioSpec::default(),
            features: None,
            estimators: vec![
                EstimatorSpec::Naive,
                EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdConfig {
    pub method: IdMethod,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
}

impl Default for IdConfig {
    fn default() -> Self {
        Self {
            method: IdMethod::Mle,
            k: None,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotateConfig {
    pub seed: u64,
    pub target: CurveTarget,
    pub rotations: usize,
    /// Fixed penalty; cross-validated when absent.
    pub lambda: Option<f64>,
}

impl Default for RotateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            target: CurveTarget::Outcome,
            rotations: 10,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub seed: u64,
    pub target: HcmSpec,
    pub experiment: RateSpec,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            target: HcmSpec::balanced(2, 2, 2, 2.0),
            experiment: RateSpec::default(),
        }
    }
}
