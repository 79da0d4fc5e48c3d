use nalgebra::{DMatrix, DVector};

use super::{check_inputs, Diagnostics, FittedLearner, LearnerSpec, LinearModel, Model};
use crate::error::Result;
use crate::linalg::{least_squares, with_intercept};

/// Ridge added (relative to the largest Gram diagonal) when the design is rank deficient.
const RANK_FALLBACK_RIDGE: f64 = 1e-10;

/// Ordinary least squares with an unpenalized intercept, on raw features.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<FittedLearner> {
    check_inputs(x, y, false)?;
    let a = with_intercept(x);
    let yv = DVector::from_column_slice(y);
    let (b, full_rank) = least_squares(&a, &yv, RANK_FALLBACK_RIDGE);
    let resid = &yv - &a * &b;
    let model = LinearModel {
        intercept: b[0],
        coef: b.iter().skip(1).cloned().collect(),
    };
    Ok(FittedLearner {
        spec: LearnerSpec::Ols,
        model: Model::Linear(model),
        diagnostics: Diagnostics {
            final_loss: resid.norm_squared() / y.len() as f64,
            iterations: 1,
            converged: full_rank,
            lambda: None,
        },
        n_features: x.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, seeded};

    #[test]
    fn two_point_line() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let f = fit_ols(&x, &[0.0, 2.0]).unwrap();
        let m = f.linear().unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn constant_outcome() {
        let x = DMatrix::from_fn(10, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + j as f64 * 0.1 * i as f64);
        let f = fit_ols(&x, &[4.5; 10]).unwrap();
        let m = f.linear().unwrap();
        assert!(m.coef.iter().all(|b| b.abs() < 1e-10));
        assert!((m.intercept - 4.5).abs() < 1e-10);
    }

    fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        // brute-force (AᵀA)⁻¹Aᵀy by explicit inverse
        let a = with_intercept(x);
        let gram = a.transpose() * &a;
        let inv = gram.try_inverse().unwrap();
        (inv * a.transpose() * DVector::from_column_slice(y)).iter().cloned().collect()
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = seeded(5);
        let x = DMatrix::from_vec(50, 5, normals(&mut rng, 250));
        let y = normals(&mut rng, 50);
        let f = fit_ols(&x, &y).unwrap();
        let m = f.linear().unwrap();
        let oracle = normal_equations(&x, &y);
        assert!((m.intercept - oracle[0]).abs() < 1e-8);
        for j in 0..5 {
            assert!((m.coef[j] - oracle[j + 1]).abs() < 1e-8);
        }
        // residuals orthogonal to every column
        let pred = f.predict(&x).unwrap();
        for j in 0..5 {
            let dot: f64 = (0..50).map(|i| (y[i] - pred[i]) * x[(i, j)]).sum();
            assert!(dot.abs() < 1e-6);
        }
    }

    #[test]
    fn predicts_mean_at_centroid() {
        let mut rng = seeded(9);
        let x = DMatrix::from_vec(30, 3, normals(&mut rng, 90));
        let y = normals(&mut rng, 30);
        let f = fit_ols(&x, &y).unwrap();
        let centroid = DMatrix::from_fn(1, 3, |_, j| x.column(j).mean());
        let p = f.predict(&centroid).unwrap()[0];
        assert!((p - y.iter().sum::<f64>() / 30.0).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_design_still_fits() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64) * (j + 1) as f64);
        let y: Vec<f64> = (0..6).map(|i| 1.0 + 3.0 * i as f64).collect();
        let f = fit_ols(&x, &y).unwrap();
        assert!(!f.diagnostics.converged);
        let p = f.predict(&x).unwrap();
        assert!(crate::linalg::max_abs_diff(&p, &y) < 1e-6);
    }

    #[test]
    fn non_finite_is_numerics_error() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, f64::INFINITY]);
        assert!(matches!(fit_ols(&x, &[0.0, 1.0]), Err(crate::Error::Numerics(_))));
    }
}
