use nalgebra::{DMatrix, DVector};

use super::{AteReport, Method};
use crate::data::{with_treatment_column, RepresentationSet};
use crate::error::{Error, Result};
use crate::learners::{fit, LearnerSpec};
use crate::stats::{mean, sample_variance};

fn arms(t: &[u8], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if t.len() != y.len() {
        return Err(Error::Dimension {
            expected: t.len(),
            found: y.len(),
        });
    }
    let treated: Vec<f64> = y.iter().zip(t).filter(|(_, &ti)| ti == 1).map(|(v, _)| *v).collect();
    let control: Vec<f64> = y.iter().zip(t).filter(|(_, &ti)| ti == 0).map(|(v, _)| *v).collect();
    if treated.is_empty() {
        return Err(Error::EmptyArm { arm: 1 });
    }
    if control.is_empty() {
        return Err(Error::EmptyArm { arm: 0 });
    }
    Ok((treated, control))
}

/// Difference in arm means with the unequal-variance standard error.
pub fn naive_ate(t: &[u8], y: &[f64], level: f64) -> Result<AteReport> {
    let (treated, control) = arms(t, y)?;
    let est = mean(&treated) - mean(&control);
    let se = (sample_variance(&treated) / treated.len() as f64 + sample_variance(&control) / control.len() as f64).sqrt();
    AteReport::new(Method::Naive, est, se, t.len(), level)
}

/// Coefficient of `t` in the OLS fit `y ~ 1 + t + label`, with the classical
/// homoskedastic standard error. A constant label drops out of the design.
pub fn oracle_ate(t: &[u8], y: &[f64], label: &[u8], level: f64) -> Result<AteReport> {
    arms(t, y)?;
    if label.len() != t.len() {
        return Err(Error::Dimension {
            expected: t.len(),
            found: label.len(),
        });
    }
    let n = t.len();
    let label_varies = label.iter().any(|&l| l != label[0]);
    if label_varies && (label == t || label.iter().zip(t).all(|(l, ti)| l != ti)) {
        return Err(Error::Collinearity);
    }
    let p = if label_varies { 3 } else { 2 };
    let x = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        1 => t[i] as f64,
        _ => label[i] as f64,
    });
    let yv = DVector::from_column_slice(y);
    let gram = x.tr_mul(&x);
    let inv = gram.cholesky().ok_or(Error::Collinearity)?.inverse();
    let beta = &inv * x.tr_mul(&yv);
    let resid = &yv - &x * &beta;
    let dof = n.saturating_sub(p).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let se = (sigma2 * inv[(1, 1)]).max(0.0).sqrt();
    AteReport::new(Method::Oracle, beta[1], se, n, level)
}

/// Single model on `[t, z]`; the estimate averages `ĝ(1, z) − ĝ(0, z)` and the
/// standard error is the sd of those contrasts over `√n`. That standard error
/// ignores estimation error in `ĝ` and is too small in general.
pub fn s_learner_ate(set: &RepresentationSet, spec: &LearnerSpec, seed: u64, level: f64) -> Result<AteReport> {
    let (t, y) = set.observed()?;
    arms(t, y)?;
    let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
    let model = fit(spec, &with_treatment_column(set.z(), &tf), y, seed)?;
    let n = set.n();
    let g1 = model.predict(&with_treatment_column(set.z(), &vec![1.0; n]))?;
    let g0 = model.predict(&with_treatment_column(set.z(), &vec![0.0; n]))?;
    let contrasts: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    let se = (sample_variance(&contrasts) / n as f64).sqrt();
    AteReport::new(Method::SLearner, mean(&contrasts), se, n, level)
}
