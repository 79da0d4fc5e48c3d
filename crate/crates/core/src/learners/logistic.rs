//! Logistic regression: ridge-penalized IRLS and L1-penalized proximal Newton.

use nalgebra::{DMatrix, DVector};

use super::lasso::{argmin_first, search_grid, COEF_TOL};
use super::{check_inputs, Diagnostics, FittedLearner, LearnerSpec, LinearModel, Model, Penalty};
use super::CV_FOLDS;
use crate::data::make_folds;
use crate::error::{Error, Result};
use crate::linalg::{logistic_loss, sigmoid, standardize, with_intercept, Standardized};

const MAX_NEWTON: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// Coefficient norm beyond which the fit is declared divergent (separation).
const DIVERGENCE_NORM: f64 = 1e6;

/// `Σ logloss + (λ/2)‖θ‖²` over all parameters including the intercept.
fn l2_objective(a: &DMatrix<f64>, t: &[f64], theta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = a * theta;
    eta.iter().zip(t).map(|(&e, &ti)| logistic_loss(e, ti)).sum::<f64>()
        + 0.5 * lambda * theta.norm_squared()
}

/// Ridge-penalized logistic regression on raw features by Newton's method with
/// step halving.
///
/// Minimizes `Σᵢ [log(1 + e^ηᵢ) − tᵢηᵢ] + (λ/2)(β₀² + ‖β‖²)`. The intercept is
/// penalized as well, so a constant target is shrunk toward 1/2 rather than
/// diverging. Stops when the gradient norm divided by n drops below 1e-8, after
/// 100 iterations, or when `‖θ‖` exceeds 1e6 (flagged as not converged).
pub fn fit_logistic(x: &DMatrix<f64>, t: &[f64], lambda: f64) -> Result<FittedLearner> {
    check_inputs(x, t, true)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidSpec(format!("lambda {lambda} < 0")));
    }
    let n = x.nrows();
    let a = with_intercept(x);
    let p = a.ncols();
    let tv = DVector::from_column_slice(t);
    let mut theta = DVector::zeros(p);
    let mut obj = l2_objective(&a, t, &theta, lambda);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_NEWTON {
        let eta = &a * &theta;
        let prob = eta.map(sigmoid);
        let grad = a.tr_mul(&(&prob - &tv)) + &theta * lambda;
        if grad.norm() / n as f64 <= GRAD_TOL {
            converged = true;
            break;
        }
        let w = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let mut aw = a.clone();
        for (i, mut row) in aw.row_iter_mut().enumerate() {
            row *= w[i].sqrt();
        }
        let mut hess = aw.tr_mul(&aw);
        for i in 0..p {
            hess[(i, i)] += lambda;
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let scale = (0..p).map(|i| hess[(i, i)]).fold(0.0, f64::max).max(1e-300);
                for i in 0..p {
                    hess[(i, i)] += 1e-10 * scale;
                }
                hess.lu().solve(&grad).unwrap_or_else(|| grad.clone())
            }
        };
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - &step * s;
            let cand_obj = l2_objective(&a, t, &cand, lambda);
            if cand_obj <= obj + 1e-12 * obj.abs() {
                theta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // no descent along the Newton direction: at the optimum to machine precision
            converged = grad.norm() / n as f64 <= 1e-6;
            break;
        }
        if theta.norm() > DIVERGENCE_NORM {
            converged = false;
            break;
        }
    }
    if lambda == 0.0 && separated(&a, t, &theta) {
        converged = false;
    }

    let model = LinearModel {
        intercept: theta[0],
        coef: theta.iter().skip(1).cloned().collect(),
    };
    Ok(FittedLearner {
        spec: LearnerSpec::LogisticL2 { lambda },
        model: Model::Logistic(model),
        diagnostics: Diagnostics {
            final_loss: obj / n as f64,
            iterations,
            converged,
            lambda: Some(lambda),
        },
        n_features: x.ncols(),
    })
}

/// Fitted probabilities all within 10⁻⁶ of their labels: the unpenalized
/// optimum is at infinity even if the gradient has already vanished.
fn separated(a: &DMatrix<f64>, t: &[f64], theta: &DVector<f64>) -> bool {
    (a * theta).iter().zip(t).all(|(&e, &ti)| (sigmoid(e) - ti).abs() < 1e-6)
}

/// Mean log-loss on standardized features plus `λ‖β‖₁`.
fn l1_objective(eta: &[f64], t: &[f64], beta: &[f64], lambda: f64) -> f64 {
    eta.iter().zip(t).map(|(&e, &ti)| logistic_loss(e, ti)).sum::<f64>() / t.len() as f64
        + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn linear_predictor(xs: &DMatrix<f64>, b0: f64, beta: &[f64]) -> Vec<f64> {
    let n = xs.nrows();
    let data = xs.as_slice();
    let mut eta = vec![b0; n];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (e, v) in eta.iter_mut().zip(&data[j * n..(j + 1) * n]) {
                *e += b * v;
            }
        }
    }
    eta
}

struct L1State {
    b0: f64,
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    objective: f64,
}

/// Proximal Newton: each outer step minimizes the weighted-lasso quadratic
/// model of the mean log-loss by coordinate descent, then backtracks along the
/// resulting direction until the penalized objective decreases.
fn l1_solve(xs: &DMatrix<f64>, t: &[f64], lambda: f64, b0: f64, beta: Vec<f64>) -> L1State {
    let (n, d) = xs.shape();
    let nf = n as f64;
    let data = xs.as_slice();
    let mut b0 = b0;
    let mut beta = beta;
    let mut eta = linear_predictor(xs, b0, &beta);
    let mut obj = l1_objective(&eta, t, &beta, lambda);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_NEWTON {
        iterations += 1;
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = prob.iter().map(|q| (q * (1.0 - q)).max(1e-5)).collect();
        // Quadratic model in covariance form: with working residual r = (t − p)/w,
        // a = Σwr/n, c = x̃ᵀWr/n, h = x̃ᵀw/n and G = x̃ᵀWx̃/n, kept in sync
        // as the intercept and coefficients move.
        let mut a = (0..n).map(|i| t[i] - prob[i]).sum::<f64>() / nf;
        let w_mean = w.iter().sum::<f64>() / nf;
        let weighted = DMatrix::from_fn(n, d, |i, j| w[i].sqrt() * xs[(i, j)]);
        let gram = weighted.tr_mul(&weighted) / nf;
        let g = gram.as_slice();
        let h: Vec<f64> = (0..d)
            .map(|j| data[j * n..(j + 1) * n].iter().zip(&w).map(|(x, wi)| wi * x).sum::<f64>() / nf)
            .collect();
        let mut c: Vec<f64> = (0..d)
            .map(|j| {
                data[j * n..(j + 1) * n]
                    .iter()
                    .zip(t.iter().zip(&prob))
                    .map(|(x, (ti, p))| x * (ti - p))
                    .sum::<f64>()
                    / nf
            })
            .collect();
        let mut nb0 = b0;
        let mut nbeta = beta.clone();
        for _ in 0..1000 {
            let mut change = 0.0f64;
            let shift = a / w_mean;
            if shift != 0.0 {
                nb0 += shift;
                a -= w_mean * shift;
                for (ck, hk) in c.iter_mut().zip(&h) {
                    *ck -= hk * shift;
                }
                change = change.max(shift.abs());
            }
            for j in 0..d {
                let gjj = g[j * d + j];
                if gjj <= 0.0 {
                    continue;
                }
                let rho = c[j] + gjj * nbeta[j];
                let new = if rho > lambda {
                    (rho - lambda) / gjj
                } else if rho < -lambda {
                    (rho + lambda) / gjj
                } else {
                    0.0
                };
                let delta = new - nbeta[j];
                if delta != 0.0 {
                    for (ck, gk) in c.iter_mut().zip(&g[j * d..(j + 1) * d]) {
                        *ck -= gk * delta;
                    }
                    a -= h[j] * delta;
                    nbeta[j] = new;
                    change = change.max(delta.abs());
                }
            }
            if change < COEF_TOL {
                break;
            }
        }

        let d0 = nb0 - b0;
        let dbeta: Vec<f64> = nbeta.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let max_step = dbeta.iter().fold(d0.abs(), |m, v| m.max(v.abs()));
        if max_step < COEF_TOL {
            converged = true;
            break;
        }
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cb0 = b0 + s * d0;
            let cbeta: Vec<f64> = beta.iter().zip(&dbeta).map(|(b, db)| b + s * db).collect();
            let ceta = linear_predictor(xs, cb0, &cbeta);
            let cobj = l1_objective(&ceta, t, &cbeta, lambda);
            if cobj <= obj + 1e-14 * obj.abs() {
                b0 = cb0;
                beta = cbeta;
                eta = ceta;
                let gain = obj - cobj;
                obj = cobj;
                accepted = true;
                if s * max_step < COEF_TOL || gain <= 1e-15 * obj.abs().max(1.0) {
                    converged = true;
                }
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        if converged {
            break;
        }
        let norm = (b0 * b0 + beta.iter().map(|b| b * b).sum::<f64>()).sqrt();
        if norm > DIVERGENCE_NORM {
            break;
        }
    }
    L1State {
        b0,
        beta,
        iterations,
        converged,
        objective: obj,
    }
}

fn l1_to_original(st: &Standardized, b0: f64, beta: &[f64]) -> LinearModel {
    let coef: Vec<f64> = beta.iter().zip(&st.sds).map(|(b, sd)| b / sd).collect();
    let intercept = b0 - coef.iter().zip(&st.means).map(|(b, m)| b * m).sum::<f64>();
    LinearModel { intercept, coef }
}

fn null_intercept(t: &[f64]) -> f64 {
    let p = (t.iter().sum::<f64>() / t.len() as f64).clamp(1e-10, 1.0 - 1e-10);
    (p / (1.0 - p)).ln()
}

/// Null-model penalty on standardized features: `max_j |x̃_jᵀ(t − t̄)| / n`.
fn l1_lambda_max(xs: &DMatrix<f64>, t: &[f64]) -> f64 {
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let tc: Vec<f64> = t.iter().map(|v| v - mean).collect();
    super::lasso::lambda_max(xs, &tc)
}

fn l1_path(
    xs: &DMatrix<f64>,
    t: &[f64],
    grid: &[f64],
    mut visit: impl FnMut(usize, f64, &[f64]),
) -> L1State {
    let mut state = L1State {
        b0: null_intercept(t),
        beta: vec![0.0; xs.ncols()],
        iterations: 0,
        converged: true,
        objective: f64::NAN,
    };
    let mut total = 0;
    let mut all_converged = true;
    for (i, &lambda) in grid.iter().enumerate() {
        state = l1_solve(xs, t, lambda, state.b0, std::mem::take(&mut state.beta));
        total += state.iterations;
        all_converged &= state.converged;
        visit(i, state.b0, &state.beta);
    }
    state.iterations = total;
    state.converged = all_converged;
    state
}

/// L1-penalized logistic regression on internally standardized features,
/// intercept unpenalized. With cross-validation the penalty minimizing mean
/// held-out log-loss over 5 folds is chosen.
pub fn fit_logistic_l1(x: &DMatrix<f64>, t: &[f64], penalty: &Penalty, seed: u64) -> Result<FittedLearner> {
    check_inputs(x, t, true)?;
    penalty.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidSpec("logistic regression needs n >= 2".into()));
    }
    let st = standardize(x);
    let (grid, chosen) = match penalty {
        Penalty::Fixed(l) => (vec![*l], 0),
        Penalty::CrossValidated { grid } => {
            let lmax = l1_lambda_max(&st.x, t);
            let grid = search_grid(grid, lmax);
            let losses = l1_cv_losses(x, t, &grid, seed)?;
            let best = argmin_first(&losses);
            (grid, best)
        }
    };
    let state = l1_path(&st.x, t, &grid[..=chosen], |_, _, _| {});
    let model = l1_to_original(&st, state.b0, &state.beta);
    Ok(FittedLearner {
        spec: LearnerSpec::LogisticL1 {
            penalty: penalty.clone(),
        },
        model: Model::Logistic(model),
        diagnostics: Diagnostics {
            final_loss: state.objective,
            iterations: state.iterations,
            converged: state.converged,
            lambda: Some(grid[chosen]),
        },
        n_features: x.ncols(),
    })
}

fn l1_cv_losses(x: &DMatrix<f64>, t: &[f64], grid: &[f64], seed: u64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let k = CV_FOLDS.min(n);
    let folds = make_folds(n, k, seed)?;
    let mut loss = vec![0.0; grid.len()];
    for fold in 0..k {
        let train = folds.out_of_fold(fold);
        let test = folds.in_fold(fold);
        let xt = x.select_rows(&train);
        let tt: Vec<f64> = train.iter().map(|&i| t[i]).collect();
        let st = standardize(&xt);
        let xv = x.select_rows(&test);
        l1_path(&st.x, &tt, grid, |g, b0, beta| {
            let model = l1_to_original(&st, b0, beta);
            let eta = model.linear_predictor(&xv);
            loss[g] += test
                .iter()
                .zip(&eta)
                .map(|(&i, &e)| logistic_loss(e, t[i]))
                .sum::<f64>();
        });
    }
    Ok(loss.into_iter().map(|s| s / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::rng::{normals, seeded};
    use rand::Rng;

    fn logistic_problem(seed: u64, n: usize, d: usize, coef: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        let x = DMatrix::from_vec(n, d, normals(&mut rng, n * d));
        let t = (0..n)
            .map(|i| {
                let eta: f64 = 0.2 + coef.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum::<f64>();
                (rng.random::<f64>() < sigmoid(eta)) as u8 as f64
            })
            .collect();
        (x, t)
    }

    #[test]
    fn constant_target_shrinks_toward_half() {
        let x = DMatrix::from_fn(20, 2, |i, j| (i as f64 * 0.37 + j as f64).sin());
        let t = vec![1.0; 20];
        let mut last_slope = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 1e3, 1e6] {
            let f = fit_logistic(&x, &t, lambda).unwrap();
            let p = f.predict(&x).unwrap();
            assert!(p.iter().all(|&q| q > 0.5 && q < 1.0));
            let slope = f.linear().unwrap().coef.iter().map(|b| b.abs()).sum::<f64>();
            assert!(slope <= last_slope + 1e-12);
            last_slope = slope;
        }
        assert!(last_slope < 1e-4);
    }

    #[test]
    fn one_dimensional_grid_oracle() {
        // x=[−1,1], t=[0,1], λ=1
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let t = [0.0, 1.0];
        let f = fit_logistic(&x, &t, 1.0).unwrap();
        let m = f.linear().unwrap();
        let objective = |b0: f64, b1: f64| {
            logistic_loss(b0 - b1, 0.0) + logistic_loss(b0 + b1, 1.0) + 0.5 * (b0 * b0 + b1 * b1)
        };
        // brute-force grid search, refined twice around the incumbent
        let (mut best0, mut best1, mut span) = (0.0, 0.0, 4.0);
        for _ in 0..3 {
            let mut best = f64::INFINITY;
            let (c0, c1) = (best0, best1);
            for i in 0..=400 {
                for j in 0..=400 {
                    let b0 = c0 - span + 2.0 * span * i as f64 / 400.0;
                    let b1 = c1 - span + 2.0 * span * j as f64 / 400.0;
                    let v = objective(b0, b1);
                    if v < best {
                        best = v;
                        best0 = b0;
                        best1 = b1;
                    }
                }
            }
            span /= 100.0;
        }
        assert!((m.coef[0] - best1).abs() < 1e-4, "{} vs {best1}", m.coef[0]);
        assert!((m.intercept - best0).abs() < 1e-4);
    }

    #[test]
    fn unpenalized_predictions_invariant_under_invertible_map() {
        let (x, t) = logistic_problem(3, 300, 4, &[1.0, -0.5, 0.0, 0.3]);
        let q = crate::transforms::sample_invertible(4, 8).unwrap();
        let xq = q.apply_matrix(&x).unwrap();
        let a = fit_logistic(&x, &t, 0.0).unwrap();
        let b = fit_logistic(&xq, &t, 0.0).unwrap();
        assert!(a.diagnostics.converged && b.diagnostics.converged);
        let pa = a.predict(&x).unwrap();
        let pb = b.predict(&xq).unwrap();
        assert!(max_abs_diff(&pa, &pb) < 1e-5);
    }

    #[test]
    fn perfect_separation_is_flagged() {
        let x = DMatrix::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let f = fit_logistic(&x, &[0.0, 0.0, 1.0, 1.0], 0.0).unwrap();
        assert!(!f.diagnostics.converged);
        let p = f.predict(&x).unwrap();
        assert!(p.iter().all(|q| (0.0..=1.0).contains(q)));
    }

    #[test]
    fn l1_large_penalty_is_null_model() {
        let (x, t) = logistic_problem(4, 100, 3, &[1.0, 0.0, 0.0]);
        let f = fit_logistic_l1(&x, &t, &Penalty::Fixed(1e3), 0).unwrap();
        let m = f.linear().unwrap();
        assert!(m.coef.iter().all(|&b| b == 0.0));
        let rate = t.iter().sum::<f64>() / 100.0;
        assert!((m.intercept - (rate / (1.0 - rate)).ln()).abs() < 1e-8);
    }

    #[test]
    fn l1_zero_penalty_matches_irls() {
        let (x, t) = logistic_problem(5, 400, 3, &[0.8, -0.6, 0.2]);
        let a = fit_logistic_l1(&x, &t, &Penalty::Fixed(0.0), 0).unwrap();
        let b = fit_logistic(&x, &t, 0.0).unwrap();
        let (ma, mb) = (a.linear().unwrap(), b.linear().unwrap());
        assert!((ma.intercept - mb.intercept).abs() < 1e-4);
        assert!(max_abs_diff(&ma.coef, &mb.coef) < 1e-4);
    }

    #[test]
    fn l1_recovers_active_sign() {
        let (x, t) = logistic_problem(6, 500, 2, &[-1.5, 0.0]);
        let f = fit_logistic_l1(&x, &t, &Penalty::cv(), 1).unwrap();
        let m = f.linear().unwrap();
        assert!(m.coef[0] < 0.0);
        assert!(m.coef[0].abs() > 5.0 * m.coef[1].abs());
    }

    #[test]
    fn probabilities_bounded() {
        let (x, t) = logistic_problem(7, 200, 3, &[3.0, 2.0, -4.0]);
        for f in [
            fit_logistic(&x, &t, 0.5).unwrap(),
            fit_logistic_l1(&x, &t, &Penalty::Fixed(0.01), 0).unwrap(),
        ] {
            assert!(f.predict(&x).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
