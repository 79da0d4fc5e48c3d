//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Objective on standardized features `x̃` and centred outcome:
//! `(1/2n)‖y − β₀ − x̃β‖² + λ‖β‖₁`, intercept unpenalized. Coefficients are
//! mapped back to the original feature scale before they leave this module.

use nalgebra::DMatrix;

use super::{check_inputs, Diagnostics, FittedLearner, LearnerSpec, LinearModel, Model, Penalty};
use super::{CV_FOLDS, GRID_LEN, GRID_RATIO};
use crate::data::make_folds;
use crate::error::{Error, Result};
use crate::linalg::{standardize, Standardized};

pub(crate) const MAX_SWEEPS: usize = 10_000;
pub(crate) const COEF_TOL: f64 = 1e-8;

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Smallest penalty with an all-zero solution: `max_j |x̃_jᵀ(y − ȳ)| / n`.
pub fn lambda_max(xs: &DMatrix<f64>, y_centered: &[f64]) -> f64 {
    let n = xs.nrows();
    let data = xs.as_slice();
    (0..xs.ncols())
        .map(|j| {
            let col = &data[j * n..(j + 1) * n];
            col.iter().zip(y_centered).map(|(a, b)| a * b).sum::<f64>().abs() / n as f64
        })
        .fold(0.0, f64::max)
}

/// `GRID_LEN` log-spaced penalties from `lmax` down to `GRID_RATIO · lmax`.
pub fn lambda_grid(lmax: f64) -> Vec<f64> {
    if lmax <= 0.0 {
        return vec![0.0];
    }
    let (hi, lo) = (lmax.ln(), (lmax * GRID_RATIO).ln());
    (0..GRID_LEN)
        .map(|i| (hi + (lo - hi) * i as f64 / (GRID_LEN - 1) as f64).exp())
        .collect()
}

/// Sweeps `update` over all coordinates, then over the active set until it
/// settles, until no coefficient moves by more than `COEF_TOL`.
pub(crate) fn sweep_until_stable(beta: &mut [f64], mut update: impl FnMut(usize, &mut [f64]) -> f64) -> (usize, bool) {
    let d = beta.len();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let mut change = 0.0f64;
        for j in 0..d {
            change = change.max(update(j, beta));
        }
        sweeps += 1;
        if change < COEF_TOL {
            return (sweeps, true);
        }
        let active: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
        while sweeps < MAX_SWEEPS {
            let mut change = 0.0f64;
            for &j in &active {
                change = change.max(update(j, beta));
            }
            sweeps += 1;
            if change < COEF_TOL {
                break;
            }
        }
    }
    (sweeps, false)
}

/// Coordinate descent in covariance form: `gram = x̃ᵀx̃/n` and `corr` tracks
/// `x̃ᵀ(y − x̃β)/n`, so each update costs O(d) instead of O(n). Columns of `xs`
/// are standardized (unit mean square) or all-zero. Returns (sweeps, converged).
pub(crate) fn coordinate_descent(gram: &DMatrix<f64>, lambda: f64, beta: &mut [f64], corr: &mut [f64]) -> (usize, bool) {
    let d = beta.len();
    let g = gram.as_slice();
    sweep_until_stable(beta, |j, beta| {
        let gjj = g[j * d + j];
        if gjj <= 0.0 {
            return 0.0;
        }
        let rho = corr[j] + gjj * beta[j];
        let new = soft_threshold(rho, lambda) / gjj;
        let delta = new - beta[j];
        if delta != 0.0 {
            for (c, gk) in corr.iter_mut().zip(&g[j * d..(j + 1) * d]) {
                *c -= gk * delta;
            }
            beta[j] = new;
        }
        delta.abs()
    })
}

struct PathFit {
    beta: Vec<f64>,
    sweeps: usize,
    converged: bool,
}

/// Warm-started path over descending `grid`, calling `visit(index, beta)` at each penalty.
fn run_path(
    xs: &DMatrix<f64>,
    y_centered: &[f64],
    grid: &[f64],
    mut visit: impl FnMut(usize, &[f64]),
) -> PathFit {
    let nf = xs.nrows() as f64;
    let gram = xs.tr_mul(xs) / nf;
    let mut corr: Vec<f64> = (xs.tr_mul(&nalgebra::DVector::from_column_slice(y_centered)) / nf)
        .iter()
        .copied()
        .collect();
    let mut beta = vec![0.0; xs.ncols()];
    let mut sweeps = 0;
    let mut converged = true;
    for (i, &lambda) in grid.iter().enumerate() {
        let (s, c) = coordinate_descent(&gram, lambda, &mut beta, &mut corr);
        sweeps += s;
        converged &= c;
        visit(i, &beta);
    }
    PathFit {
        beta,
        sweeps,
        converged,
    }
}

fn to_original_scale(st: &Standardized, y_mean: f64, beta_std: &[f64]) -> LinearModel {
    let coef: Vec<f64> = beta_std.iter().zip(&st.sds).map(|(b, sd)| b / sd).collect();
    let intercept = y_mean - coef.iter().zip(&st.means).map(|(b, m)| b * m).sum::<f64>();
    LinearModel { intercept, coef }
}

fn centered(y: &[f64]) -> (f64, Vec<f64>) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (mean, y.iter().map(|v| v - mean).collect())
}

/// Descending grid to search: the user's grid, or the default one anchored at
/// the full-data null penalty.
pub(crate) fn search_grid(penalty_grid: &Option<Vec<f64>>, lmax: f64) -> Vec<f64> {
    let mut grid = match penalty_grid {
        Some(g) => g.clone(),
        None => lambda_grid(lmax),
    };
    grid.sort_by(|a, b| b.total_cmp(a));
    grid
}

/// Index of the smallest mean CV loss; ties go to the larger penalty.
pub(crate) fn argmin_first(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    best
}

pub fn fit_lasso(x: &DMatrix<f64>, y: &[f64], penalty: &Penalty, seed: u64) -> Result<FittedLearner> {
    check_inputs(x, y, false)?;
    penalty.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidSpec("lasso needs n >= 2".into()));
    }
    let st = standardize(x);
    let (y_mean, yc) = centered(y);

    let (grid, chosen) = match penalty {
        Penalty::Fixed(l) => (vec![*l], 0),
        Penalty::CrossValidated { grid } => {
            let grid = search_grid(grid, lambda_max(&st.x, &yc));
            let losses = cv_losses(x, y, &grid, seed)?;
            let best = argmin_first(&losses);
            (grid, best)
        }
    };

    let path = run_path(&st.x, &yc, &grid[..=chosen], |_, _| {});
    let model = to_original_scale(&st, y_mean, &path.beta);
    let pred = model.linear_predictor(x);
    let mse = pred.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / n as f64;
    Ok(FittedLearner {
        spec: LearnerSpec::Lasso {
            penalty: penalty.clone(),
        },
        model: Model::Linear(model),
        diagnostics: Diagnostics {
            final_loss: mse,
            iterations: path.sweeps,
            converged: path.converged,
            lambda: Some(grid[chosen]),
        },
        n_features: x.ncols(),
    })
}

/// Mean held-out squared error per grid point, standardizing inside each training fold.
fn cv_losses(x: &DMatrix<f64>, y: &[f64], grid: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let k = CV_FOLDS.min(n);
    let folds = make_folds(n, k, seed)?;
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..k {
        let train = folds.out_of_fold(fold);
        let test = folds.in_fold(fold);
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let st = standardize(&xt);
        let (y_mean, yc) = centered(&yt);
        let xv = x.select_rows(&test);
        run_path(&st.x, &yc, grid, |g, beta| {
            let model = to_original_scale(&st, y_mean, beta);
            let pred = model.linear_predictor(&xv);
            sse[g] += test
                .iter()
                .zip(&pred)
                .map(|(&i, p)| (y[i] - p).powi(2))
                .sum::<f64>();
        });
    }
    Ok(sse.into_iter().map(|s| s / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_ols;
    use crate::rng::{normals, seeded};

    fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        let x = DMatrix::from_vec(n, d, normals(&mut rng, n * d));
        let noise = normals(&mut rng, n);
        let y = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - 1.5 * x[(i, 2)] + 0.5 * noise[i])
            .collect();
        (x, y)
    }

    #[test]
    fn lambda_at_max_gives_null_model() {
        let (x, y) = random_problem(1, 40, 6);
        let st = standardize(&x);
        let (_, yc) = centered(&y);
        let lmax = lambda_max(&st.x, &yc);
        for l in [lmax, lmax * 1.5] {
            let f = fit_lasso(&x, &y, &Penalty::Fixed(l), 0).unwrap();
            let m = f.linear().unwrap();
            assert!(m.coef.iter().all(|&b| b == 0.0));
            assert!((m.intercept - y.iter().sum::<f64>() / 40.0).abs() < 1e-12);
        }
        let f = fit_lasso(&x, &y, &Penalty::Fixed(lmax * 0.9), 0).unwrap();
        assert!(f.linear().unwrap().nonzero(0.0) >= 1);
    }

    /// Orthonormal design with centred unit-variance columns, built from
    /// Hadamard rows, so the closed form is elementwise soft-thresholding.
    fn orthonormal_design() -> DMatrix<f64> {
        let mut h = DMatrix::from_element(1, 1, 1.0);
        for _ in 0..4 {
            let k = h.nrows();
            let mut next = DMatrix::zeros(2 * k, 2 * k);
            for i in 0..k {
                for j in 0..k {
                    next[(i, j)] = h[(i, j)];
                    next[(i + k, j)] = h[(i, j)];
                    next[(i, j + k)] = h[(i, j)];
                    next[(i + k, j + k)] = -h[(i, j)];
                }
            }
            h = next;
        }
        // 16×16 Hadamard; drop the constant column 0, keep 6 columns
        DMatrix::from_fn(16, 6, |i, j| h[(i, j + 1)])
    }

    #[test]
    fn orthonormal_design_matches_soft_threshold() {
        let x = orthonormal_design();
        let n = 16.0;
        let gram = x.transpose() * &x;
        assert!((gram - DMatrix::identity(6, 6) * n).amax() < 1e-12);
        let mut rng = seeded(3);
        let y: Vec<f64> = normals(&mut rng, 16).iter().map(|v| 3.0 * v).collect();
        for lambda in [0.0, 0.1, 0.5, 1.0, 2.5] {
            let f = fit_lasso(&x, &y, &Penalty::Fixed(lambda), 0).unwrap();
            let m = f.linear().unwrap();
            for j in 0..6 {
                let xty: f64 = (0..16).map(|i| x[(i, j)] * y[i]).sum::<f64>() / n;
                let oracle = soft_threshold(xty, lambda);
                assert!((m.coef[j] - oracle).abs() < 1e-6, "λ={lambda} j={j}");
            }
        }
    }

    #[test]
    fn zero_penalty_matches_ols() {
        let (x, y) = random_problem(7, 80, 5);
        let lasso = fit_lasso(&x, &y, &Penalty::Fixed(0.0), 0).unwrap();
        let ols = fit_ols(&x, &y).unwrap();
        let (a, b) = (lasso.linear().unwrap(), ols.linear().unwrap());
        assert!((a.intercept - b.intercept).abs() < 1e-6);
        for j in 0..5 {
            assert!((a.coef[j] - b.coef[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let (x, y) = random_problem(11, 60, 8);
        let lambda = 0.2;
        let f = fit_lasso(&x, &y, &Penalty::Fixed(lambda), 0).unwrap();
        let st = standardize(&x);
        let m = f.linear().unwrap();
        let beta_std: Vec<f64> = m.coef.iter().zip(&st.sds).map(|(b, s)| b * s).collect();
        let (_, yc) = centered(&y);
        let n = 60.0;
        for j in 0..8 {
            let grad: f64 = (0..60)
                .map(|i| {
                    let fit: f64 = (0..8).map(|k| st.x[(i, k)] * beta_std[k]).sum();
                    st.x[(i, j)] * (yc[i] - fit)
                })
                .sum::<f64>()
                / n;
            if beta_std[j] == 0.0 {
                assert!(grad.abs() <= lambda + 1e-6);
            } else {
                assert!((grad - lambda * beta_std[j].signum()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cross_validation_recovers_sparse_support() {
        let (x, y) = random_problem(2, 200, 20);
        let f = fit_lasso(&x, &y, &Penalty::cv(), 4).unwrap();
        let m = f.linear().unwrap();
        let support = m.support(1e-8);
        assert!(support.contains(&0) && support.contains(&2));
        assert!(support.len() <= 12, "{support:?}");
        assert!(f.diagnostics.lambda.unwrap() > 0.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let (x, y) = random_problem(2, 20, 3);
        let err = fit_lasso(&x, &y, &Penalty::CrossValidated { grid: Some(vec![]) }, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[49] - 2e-4).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
