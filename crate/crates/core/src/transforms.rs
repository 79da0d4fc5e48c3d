//! Invertible linear maps of representation space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::RepresentationSet;
use crate::error::{Error, Result};
use crate::learners::{fit_lasso, fit_logistic_l1, Penalty};
use crate::linalg::condition_number;
use crate::par;
use crate::rng::{derive, normals, seeded};

/// Redraw limit for [`sample_invertible`].
const RESAMPLE_BUDGET: usize = 100;
const MAX_CONDITION: f64 = 1e6;
/// Coefficients above this magnitude count as nonzero.
pub const NONZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Orthogonal,
    GeneralInvertible,
    Permutation,
    DiagonalScaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTransform {
    pub q: DMatrix<f64>,
    pub kind: TransformKind,
    pub seed: Option<u64>,
}

fn gaussian(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    DMatrix::from_vec(d, d, normals(&mut rng, d * d))
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidSpec("dimension must be >= 1".into()));
    }
    Ok(())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of Q flipped so that `R` has a positive diagonal.
pub fn sample_orthogonal(d: usize, seed: u64) -> Result<LinearTransform> {
    check_dim(d)?;
    let qr = gaussian(d, seed).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(LinearTransform {
        q,
        kind: TransformKind::Orthogonal,
        seed: Some(seed),
    })
}

/// Gaussian matrix with condition number below 10⁶; draw `k` uses seed `seed + k`.
pub fn sample_invertible(d: usize, seed: u64) -> Result<LinearTransform> {
    check_dim(d)?;
    for k in 0..RESAMPLE_BUDGET {
        let q = gaussian(d, derive(seed, k as u64));
        if condition_number(&q) < MAX_CONDITION {
            return Ok(LinearTransform {
                q,
                kind: TransformKind::GeneralInvertible,
                seed: Some(seed),
            });
        }
    }
    Err(Error::DegenerateTransform(RESAMPLE_BUDGET))
}

impl LinearTransform {
    /// `perm[i]` is the source column of output column `i`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let d = perm.len();
        check_dim(d)?;
        let mut seen = vec![false; d];
        for &p in perm {
            if p >= d || seen[p] {
                return Err(Error::InvalidSpec(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let mut q = DMatrix::zeros(d, d);
        for (i, &p) in perm.iter().enumerate() {
            q[(i, p)] = 1.0;
        }
        Ok(Self {
            q,
            kind: TransformKind::Permutation,
            seed: None,
        })
    }

    pub fn scaling(diag: &[f64]) -> Result<Self> {
        check_dim(diag.len())?;
        if diag.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            return Err(Error::InvalidSpec("scaling entries must be finite and nonzero".into()));
        }
        Ok(Self {
            q: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)),
            kind: TransformKind::DiagonalScaling,
            seed: None,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            q: DMatrix::identity(d, d),
            kind: TransformKind::Orthogonal,
            seed: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Maps every row `z` to `Q z`, i.e. returns `Z Qᵀ`.
    pub fn apply_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: z.ncols(),
            });
        }
        Ok(z * self.q.transpose())
    }

    /// Transforms the features; treatment, outcome and label are carried over.
    pub fn apply(&self, set: &RepresentationSet) -> Result<RepresentationSet> {
        let z = self.apply_matrix(set.z())?;
        Ok(set.with_features(z)?)
    }

    pub fn inverse(&self) -> Result<Self> {
        let q = match self.kind {
            TransformKind::Orthogonal | TransformKind::Permutation => self.q.transpose(),
            _ => self
                .q
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerics("singular transform".into()))?,
        };
        Ok(Self {
            q,
            kind: self.kind,
            seed: self.seed,
        })
    }

    pub fn compose(&self, inner: &Self) -> Self {
        let kind = if self.kind == inner.kind {
            self.kind
        } else {
            TransformKind::GeneralInvertible
        };
        Self {
            q: &self.q * &inner.q,
            kind,
            seed: None,
        }
    }
}

/// What the sparse model in [`sparsity_rotation_curve`] predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveTarget {
    /// Lasso regression of `y`.
    Outcome,
    /// L1-logistic regression of `t`.
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rotations: usize,
    pub nonzero_count: usize,
}

/// Nonzero-coefficient counts of an L1 fit after composing `r = 0..=n_rotations`
/// Haar rotations; rotation `r` is drawn with seed `seed + r`.
pub fn sparsity_rotation_curve(
    set: &RepresentationSet,
    target: CurveTarget,
    n_rotations: usize,
    penalty: &Penalty,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    let d = set.d();
    let target_values: Vec<f64> = match target {
        CurveTarget::Outcome => set.outcome()?.to_vec(),
        CurveTarget::Treatment => set.treatment()?.iter().map(|&t| t as f64).collect(),
    };
    let mut maps = vec![LinearTransform::identity(d)];
    for r in 1..=n_rotations {
        let step = sample_orthogonal(d, derive(seed, r as u64))?;
        let next = step.compose(&maps[r - 1]);
        maps.push(next);
    }
    par::try_map(n_rotations + 1, |r| {
        let z = maps[r].apply_matrix(set.z())?;
        let fit = match target {
            CurveTarget::Outcome => fit_lasso(&z, &target_values, penalty, seed)?,
            CurveTarget::Treatment => fit_logistic_l1(&z, &target_values, penalty, seed)?,
        };
        let nonzero = fit.linear().map_or(0, |m| m.nonzero(NONZERO_TOL));
        Ok(CurvePoint {
            rotations: r,
            nonzero_count: nonzero,
        })
    })
}
