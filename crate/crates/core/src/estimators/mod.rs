//! ATE estimators and their reports.

mod dml;
mod simple;

pub use dml::{
    aipw_from_predictions, cross_fit_aipw, cross_fit_partialling_out, dml_aipw_ate, dml_partialling_out_ate,
    evaluate_score, partialling_out_from_predictions, AipwPredictions, DmlConfig, PlrPredictions,
};
pub use simple::{naive_ate, oracle_ate, s_learner_ate};

use serde::{Deserialize, Serialize};

use crate::data::RepresentationSet;
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::stats::normal_critical;

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_FOLDS: usize = 2;
pub const DEFAULT_CLIP: f64 = 0.01;
/// Share of clipped propensities above which an overlap warning is raised.
pub const OVERLAP_WARN_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Oracle,
    SLearner,
    DmlAipw,
    DmlPartiallingOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub method: Method,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n: usize,
    pub folds: usize,
    pub warnings: Vec<String>,
    pub per_fold: Vec<f64>,
}

impl AteReport {
    pub(crate) fn new(method: Method, estimate: f64, std_error: f64, n: usize, level: f64) -> Result<Self> {
        check_level(level)?;
        let mut report = Self {
            method,
            estimate,
            std_error,
            ci_low: estimate,
            ci_high: estimate,
            level,
            n,
            folds: 0,
            warnings: Vec::new(),
            per_fold: Vec::new(),
        };
        report.set_interval();
        if !(std_error > 0.0) {
            report.warnings.push("degenerate: zero standard error".into());
        }
        Ok(report)
    }

    fn set_interval(&mut self) {
        let half = normal_critical(self.level) * self.std_error;
        self.ci_low = self.estimate - half;
        self.ci_high = self.estimate + half;
    }

    /// Same estimate with a z-interval at `level`.
    pub fn at_level(&self, level: f64) -> Result<Self> {
        check_level(level)?;
        let mut r = self.clone();
        r.level = level;
        r.set_interval();
        Ok(r)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// `(estimate − truth) / std_error`.
    pub fn standardized(&self, truth: f64) -> f64 {
        (self.estimate - truth) / self.std_error
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("confidence level {level} outside (0, 1)")))
    }
}

/// Serializable description of an estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Naive,
    Oracle,
    SLearner {
        learner: LearnerSpec,
    },
    DmlAipw {
        g: LearnerSpec,
        m: LearnerSpec,
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default = "default_clip")]
        clip_eps: f64,
    },
    DmlPartiallingOut {
        l: LearnerSpec,
        m: LearnerSpec,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

impl EstimatorSpec {
    pub fn aipw(g: LearnerSpec, m: LearnerSpec) -> Self {
        EstimatorSpec::DmlAipw {
            g,
            m,
            folds: DEFAULT_FOLDS,
            clip_eps: DEFAULT_CLIP,
        }
    }

    pub fn partialling_out(l: LearnerSpec, m: LearnerSpec) -> Self {
        EstimatorSpec::DmlPartiallingOut {
            l,
            m,
            folds: DEFAULT_FOLDS,
        }
    }

    /// Short display name such as `dml_aipw(ols,logistic_l2)`.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Naive => "naive".into(),
            EstimatorSpec::Oracle => "oracle".into(),
            EstimatorSpec::SLearner { learner } => format!("s_learner({})", learner.name()),
            EstimatorSpec::DmlAipw { g, m, .. } => format!("dml_aipw({},{})", g.name(), m.name()),
            EstimatorSpec::DmlPartiallingOut { l, m, .. } => {
                format!("dml_partialling_out({},{})", l.name(), m.name())
            }
        }
    }

    pub fn run(&self, set: &RepresentationSet, seed: u64, level: f64) -> Result<AteReport> {
        match self {
            EstimatorSpec::Naive => {
                let (t, y) = set.observed()?;
                naive_ate(t, y, level)
            }
            EstimatorSpec::Oracle => {
                let (t, y) = set.observed()?;
                let label = set.label().ok_or(crate::error::DataError::MissingLabel)?;
                oracle_ate(t, y, label, level)
            }
            EstimatorSpec::SLearner { learner } => s_learner_ate(set, learner, seed, level),
            EstimatorSpec::DmlAipw { g, m, folds, clip_eps } => dml_aipw_ate(
                set,
                &DmlConfig {
                    outcome: g.clone(),
                    propensity: m.clone(),
                    folds: *folds,
                    clip_eps: *clip_eps,
                    seed,
                    level,
                },
            ),
            EstimatorSpec::DmlPartiallingOut { l, m, folds } => dml_partialling_out_ate(
                set,
                &DmlConfig {
                    outcome: l.clone(),
                    propensity: m.clone(),
                    folds: *folds,
                    clip_eps: DEFAULT_CLIP,
                    seed,
                    level,
                },
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn report_json_keys() {
        let r = AteReport::new(Method::Naive, 1.0, 0.5, 10, 0.95).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["method", "estimate", "std_error", "ci_low", "ci_high", "level", "n", "folds", "warnings"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "naive");
    }

    #[test]
    fn estimator_spec_from_toml() {
        let spec: EstimatorSpec = toml::from_str(
            r#"
            method = "dml_aipw"
            g = { kind = "ols" }
            m = { kind = "logistic_l2", lambda = 0.0 }
            "#,
        )
        .unwrap();
        assert_eq!(spec, EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }));
        assert_eq!(spec.label(), "dml_aipw(ols,logistic_l2)");
        let bad = toml::from_str::<EstimatorSpec>("method = \"s_learner\"\nlearner = { kind = \"ols\" }\nextra = 1");
        assert!(bad.is_err());
    }

    #[test]
    fn bad_level_rejected() {
        assert!(AteReport::new(Method::Naive, 0.0, 1.0, 3, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn wider_level_strictly_wider_interval(est in -10.0f64..10.0, se in 1e-3f64..10.0) {
            let r = AteReport::new(Method::DmlAipw, est, se, 100, 0.95).unwrap();
            let w = r.at_level(0.99).unwrap();
            prop_assert!(w.ci_low < r.ci_low && w.ci_high > r.ci_high);
            prop_assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
        }
    }
}
