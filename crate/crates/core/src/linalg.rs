//! Small dense helpers shared by the learners and estimators.

use nalgebra::{DMatrix, DVector};

/// Column-standardized copy of `x` plus the means and (population) standard
/// deviations used. Constant columns keep sd = 1 and become all-zero.
pub struct Standardized {
    pub x: DMatrix<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

pub fn standardize(x: &DMatrix<f64>) -> Standardized {
    let (n, d) = x.shape();
    let mut out = x.clone();
    let mut means = Vec::with_capacity(d);
    let mut sds = Vec::with_capacity(d);
    for j in 0..d {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            out[(i, j)] = (x[(i, j)] - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    Standardized { x: out, means, sds }
}

/// `[1 | x]`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Least-squares solution of `a b ≈ y`.
///
/// Householder QR when `a` has full column rank (judged on the diagonal of R);
/// otherwise the normal equations with a `ridge` added to the diagonal.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> (DVector<f64>, bool) {
    let (n, p) = a.shape();
    if n >= p {
        let qr = a.clone().qr();
        let r = qr.r();
        let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let min_diag = (0..p).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if p > 0 && min_diag > 1e-10 * max_diag.max(1e-300) {
            let qty = qr.q().transpose() * y;
            if let Some(b) = r.solve_upper_triangular(&qty) {
                return (b, true);
            }
        }
    }
    let mut gram = a.transpose() * a;
    let scale = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1.0);
    for i in 0..p {
        gram[(i, i)] += ridge * scale;
    }
    let rhs = a.transpose() * y;
    let b = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(p));
    (b, false)
}

pub fn determinant(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Ratio of extreme singular values (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Binary cross-entropy of linear predictor `eta` against label `t`.
pub fn logistic_loss(eta: f64, t: f64) -> f64 {
    softplus(eta) - t * eta
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
