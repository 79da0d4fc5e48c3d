//! Nearest-neighbour intrinsic-dimension estimators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::par;
use crate::stats::{mean, median};

pub const MLE_K: usize = 5;
pub const ESS_K: usize = 25;
pub const LPCA_K: usize = 50;
pub const LPCA_ALPHA: f64 = 0.05;
const ESS_MAX_CANDIDATE: usize = 64;

/// Per-point neighbour lists: the `k` nearest rows at positive distance,
/// ascending, ties broken by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    /// Number of rows that have at least one exact duplicate.
    pub duplicates: usize,
}

impl Neighbors {
    pub fn warnings(&self) -> Vec<String> {
        if self.duplicates > 0 {
            vec![format!("duplicate points: {} rows have zero-distance neighbours, excluded", self.duplicates)]
        } else {
            Vec::new()
        }
    }
}

fn rows(z: &DMatrix<f64>) -> Vec<Vec<f64>> {
    z.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact brute-force k-nearest neighbours under the Euclidean metric.
pub fn knn(z: &DMatrix<f64>, k: usize) -> Result<Neighbors> {
    let n = z.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidSpec(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics("non-finite coordinates".into()));
    }
    let pts = rows(z);
    let lists = par::map(n, |i| {
        let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        let mut dup = false;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = distance(&pts[i], &pts[j]);
            if d > 0.0 {
                cand.push((d, j));
            } else {
                dup = true;
            }
        }
        let take = k.min(cand.len());
        if take < cand.len() {
            cand.select_nth_unstable_by(take, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(take);
        }
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        (cand, dup)
    });
    let duplicates = lists.iter().filter(|(_, d)| *d).count();
    let mut indices = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for (i, (cand, _)) in lists.into_iter().enumerate() {
        if cand.len() < k {
            return Err(Error::ZeroDistance { point: i });
        }
        indices.push(cand.iter().map(|c| c.1).collect());
        distances.push(cand.iter().map(|c| c.0).collect());
    }
    Ok(Neighbors {
        k,
        indices,
        distances,
        duplicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMethod {
    Mle,
    Ess,
    Lpca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub method: IdMethod,
    pub k: usize,
    pub value: f64,
    #[serde(skip)]
    pub per_point: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Reported values are clamped into `[1, d]`.
fn finish(method: IdMethod, k: usize, raw: f64, d: usize, per_point: Vec<f64>, mut warnings: Vec<String>) -> IdEstimate {
    let value = raw.clamp(1.0, d as f64);
    if value != raw {
        warnings.push(format!("raw estimate {raw:.4} clamped into [1, {d}]"));
    }
    IdEstimate {
        method,
        k,
        value,
        per_point,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleAggregation {
    /// Mean of the per-point estimates. Each per-point estimate has
    /// expectation `d·(k−1)/(k−2)`, so this overshoots badly for small `k`.
    Arithmetic,
    /// Inverse of the mean of per-point inverses.
    #[default]
    Harmonic,
}

/// Levina–Bickel maximum-likelihood estimate.
pub fn id_mle(z: &DMatrix<f64>, k: usize, aggregation: MleAggregation) -> Result<IdEstimate> {
    if k < 2 {
        return Err(Error::InvalidSpec("MLE needs k >= 2".into()));
    }
    let nb = knn(z, k)?;
    let mut per_point = Vec::with_capacity(z.nrows());
    for (i, t) in nb.distances.iter().enumerate() {
        let tk = t[k - 1];
        let s: f64 = t[..k - 1].iter().map(|tj| (tk / tj).ln()).sum::<f64>() / (k - 1) as f64;
        if !(s > 0.0) {
            return Err(Error::Numerics(format!("equal neighbour distances at point {i}")));
        }
        per_point.push(1.0 / s);
    }
    let raw = match aggregation {
        MleAggregation::Arithmetic => mean(&per_point),
        MleAggregation::Harmonic => 1.0 / mean(&per_point.iter().map(|m| 1.0 / m).collect::<Vec<_>>()),
    };
    Ok(finish(IdMethod::Mle, k, raw, z.ncols(), per_point, nb.warnings()))
}

fn ln_sine_integral(p: usize) -> f64 {
    // ∫₀^π sinᵖ θ dθ = √π Γ((p+1)/2) / Γ(p/2 + 1)
    0.5 * std::f64::consts::PI.ln() + ln_gamma((p as f64 + 1.0) / 2.0) - ln_gamma(p as f64 / 2.0 + 1.0)
}

/// Expected `|sin θ|` between two isotropic random vectors in `R^m`, the
/// value the pairwise simplex-skewness statistic takes on `m`-dimensional data.
pub fn ess_reference(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        _ => (ln_sine_integral(m - 1) - ln_sine_integral(m - 2)).exp(),
    }
}

/// `Σ |a||b| |sin θ| / Σ |a||b|` over pairs of centred neighbourhood vectors.
fn ess_statistic(vectors: &[Vec<f64>]) -> Option<f64> {
    let norms2: Vec<f64> = vectors.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..vectors.len() {
        for j in 0..i {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            let nn = norms2[i] * norms2[j];
            num += (nn - dot * dot).max(0.0).sqrt();
            den += nn.sqrt();
        }
    }
    (den > 0.0).then(|| num / den)
}

fn invert_ess(s: f64, max_dim: usize) -> f64 {
    let mut prev = ess_reference(1);
    for m in 2..=max_dim {
        let r = ess_reference(m);
        if s < r {
            return (m - 1) as f64 + (s - prev) / (r - prev);
        }
        prev = r;
    }
    max_dim as f64
}

/// Expected-simplex-skewness estimate (pairwise variant): median over points
/// of the dimension whose reference skewness matches the neighbourhood's.
pub fn id_ess(z: &DMatrix<f64>, k: usize) -> Result<IdEstimate> {
    if k < 2 {
        return Err(Error::InvalidSpec("ESS needs k >= 2".into()));
    }
    let nb = knn(z, k)?;
    let pts = rows(z);
    let d = z.ncols();
    let max_dim = (k - 1).min(ESS_MAX_CANDIDATE).min(d).max(1);
    let per = par::map(z.nrows(), |i| {
        let idx = &nb.indices[i];
        let mut centre = vec![0.0; d];
        for &j in idx {
            for (c, v) in centre.iter_mut().zip(&pts[j]) {
                *c += v / k as f64;
            }
        }
        let vectors: Vec<Vec<f64>> = idx
            .iter()
            .map(|&j| pts[j].iter().zip(&centre).map(|(a, c)| a - c).collect())
            .collect();
        ess_statistic(&vectors).map(|s| invert_ess(s, max_dim))
    });
    let skipped = per.iter().filter(|v| v.is_none()).count();
    let per_point: Vec<f64> = per.into_iter().flatten().collect();
    let mut warnings = nb.warnings();
    if skipped > 0 {
        warnings.push(format!("{skipped} rank-0 neighbourhoods skipped"));
    }
    if per_point.is_empty() {
        return Err(Error::Numerics("every neighbourhood is degenerate".into()));
    }
    Ok(finish(IdMethod::Ess, k, median(&per_point), d, per_point, warnings))
}

/// Local PCA: per point, the number of covariance eigenvalues of the point
/// and its `k` neighbours exceeding `alpha` times the largest; median over
/// points with non-zero covariance.
pub fn id_lpca(z: &DMatrix<f64>, k: usize, alpha: f64) -> Result<IdEstimate> {
    if k < 2 {
        return Err(Error::InvalidSpec("lPCA needs k >= 2".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidSpec(format!("alpha {alpha} outside (0, 1)")));
    }
    let nb = knn(z, k)?;
    let d = z.ncols();
    let per = par::map(z.nrows(), |i| {
        let mut members = vec![i];
        members.extend(&nb.indices[i]);
        let mut local = z.select_rows(&members);
        for mut c in local.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        // same nonzero spectrum either way; take the smaller matrix
        let gram = if d <= members.len() {
            local.tr_mul(&local)
        } else {
            &local * local.transpose()
        };
        let ev = symmetric_eigenvalues(gram);
        let top = ev[0];
        if !(top > 0.0) {
            return None;
        }
        Some(ev.iter().filter(|&&e| e > alpha * top).count() as f64)
    });
    let skipped = per.iter().filter(|v| v.is_none()).count();
    let per_point: Vec<f64> = per.into_iter().flatten().collect();
    let mut warnings = nb.warnings();
    if skipped > 0 {
        warnings.push(format!("{skipped} zero-covariance neighbourhoods excluded"));
    }
    if per_point.is_empty() {
        return Err(Error::Numerics("every neighbourhood has zero covariance".into()));
    }
    Ok(finish(IdMethod::Lpca, k, median(&per_point), d, per_point, warnings))
}

/// Dispatch with the default neighbourhood sizes when `k` is `None`.
pub fn estimate(z: &DMatrix<f64>, method: IdMethod, k: Option<usize>, alpha: Option<f64>) -> Result<IdEstimate> {
    match method {
        IdMethod::Mle => id_mle(z, k.unwrap_or(MLE_K), MleAggregation::default()),
        IdMethod::Ess => id_ess(z, k.unwrap_or(ESS_K)),
        IdMethod::Lpca => id_lpca(z, k.unwrap_or(LPCA_K), alpha.unwrap_or(LPCA_ALPHA)),
    }
}
