//! Dataset model, fold assignment and the representation file formats.

mod folds;
mod format;

pub use folds::{make_folds, FoldAssignment};
pub use format::{load_representations, save_representations, write_csv, write_ptrz, read_ptrz};

use nalgebra::DMatrix;

use crate::error::DataError;

/// Latent features `z` (n × d) with aligned treatment, outcome and optional
/// ground-truth confounder label.
///
/// Treatment and outcome are optional because extraction tools emit
/// feature-only files that a simulator later fills in. The label is only ever
/// read by the oracle estimator and the simulators.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    z: DMatrix<f64>,
    t: Option<Vec<u8>>,
    y: Option<Vec<f64>>,
    label: Option<Vec<u8>>,
}

fn check_binary(field: &'static str, values: &[u8]) -> Result<(), DataError> {
    match values.iter().position(|&v| v > 1) {
        Some(row) => Err(DataError::NotBinary {
            field,
            row,
            value: values[row],
        }),
        None => Ok(()),
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<(), DataError> {
    if expected == found {
        Ok(())
    } else {
        Err(DataError::LengthMismatch {
            field,
            expected,
            found,
        })
    }
}

impl RepresentationSet {
    pub fn new(
        z: DMatrix<f64>,
        t: Option<Vec<u8>>,
        y: Option<Vec<f64>>,
        label: Option<Vec<u8>>,
    ) -> Result<Self, DataError> {
        let (n, d) = z.shape();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if d == 0 {
            return Err(DataError::NoFeatures);
        }
        // Column-major storage: flat index -> (row, col) = (i % n, i / n).
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                field: "z",
                row: i % n,
            });
        }
        if let Some(t) = &t {
            check_len("t", n, t.len())?;
            check_binary("t", t)?;
        }
        if let Some(y) = &y {
            check_len("y", n, y.len())?;
            if let Some(row) = y.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { field: "y", row });
            }
        }
        if let Some(label) = &label {
            check_len("label", n, label.len())?;
            check_binary("label", label)?;
        }
        Ok(Self { z, t, y, label })
    }

    /// Fully observed set (features, treatment, outcome).
    pub fn with_outcomes(z: DMatrix<f64>, t: Vec<u8>, y: Vec<f64>) -> Result<Self, DataError> {
        Self::new(z, Some(t), Some(y), None)
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn t(&self) -> Option<&[u8]> {
        self.t.as_deref()
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn label(&self) -> Option<&[u8]> {
        self.label.as_deref()
    }

    pub fn treatment(&self) -> Result<&[u8], DataError> {
        self.t().ok_or(DataError::MissingTreatment)
    }

    pub fn outcome(&self) -> Result<&[f64], DataError> {
        self.y().ok_or(DataError::MissingOutcome)
    }

    /// Treatment and outcome, both required for estimation.
    pub fn observed(&self) -> Result<(&[u8], &[f64]), DataError> {
        Ok((self.treatment()?, self.outcome()?))
    }

    /// Same rows with a replacement feature matrix.
    pub fn with_features(&self, z: DMatrix<f64>) -> Result<Self, DataError> {
        check_len("z rows", self.n(), z.nrows())?;
        Self::new(z, self.t.clone(), self.y.clone(), self.label.clone())
    }

    pub fn without_label(mut self) -> Self {
        self.label = None;
        self
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, DataError> {
        let z = self.z.select_rows(idx);
        let pick_u8 = |v: &Vec<u8>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::new(
            z,
            self.t.as_ref().map(pick_u8),
            self.y.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect()),
            self.label.as_ref().map(pick_u8),
        )
    }
}

/// Feature matrix with the treatment prepended as column 0.
pub fn with_treatment_column(z: &DMatrix<f64>, t: &[f64]) -> DMatrix<f64> {
    let (n, d) = z.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { t[i] } else { z[(i, j - 1)] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |i, j| (i * d + j) as f64)
    }

    #[test]
    fn rejects_single_row() {
        assert_eq!(
            RepresentationSet::new(z(1, 2), None, None, None),
            Err(DataError::TooFewRows(1))
        );
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err = RepresentationSet::with_outcomes(z(3, 1), vec![0, 2, 1], vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, DataError::NotBinary { field: "t", row: 1, value: 2 }));
    }

    #[test]
    fn rejects_nan_feature_with_row() {
        let mut m = z(4, 2);
        m[(2, 1)] = f64::NAN;
        let err = RepresentationSet::new(m, None, None, None).unwrap_err();
        assert_eq!(err, DataError::NonFinite { field: "z", row: 2 });
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = RepresentationSet::with_outcomes(z(3, 1), vec![0, 1], vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, DataError::LengthMismatch { field: "t", .. }));
    }

    #[test]
    fn subset_keeps_alignment() {
        let set = RepresentationSet::new(
            z(4, 2),
            Some(vec![0, 1, 0, 1]),
            Some(vec![1.0, 2.0, 3.0, 4.0]),
            Some(vec![1, 1, 0, 0]),
        )
        .unwrap();
        let s = set.subset(&[3, 0]).unwrap();
        assert_eq!(s.z()[(0, 0)], 6.0);
        assert_eq!(s.t().unwrap(), &[1, 0]);
        assert_eq!(s.y().unwrap(), &[4.0, 1.0]);
        assert_eq!(s.label().unwrap(), &[0, 1]);
    }
}
