use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or writing representation files.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("bad magic bytes {found:?}, expected \"PTRZ\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },
    #[error("{field} value {value} at row {row} is not binary")]
    NotBinary {
        field: &'static str,
        row: usize,
        value: String,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("invalid representation set: {0}")]
    Invalid(#[from] DataError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Violations of the dataset invariants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least 1 feature column")]
    NoFeatures,
    #[error("length mismatch: {field} has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },
    #[error("{field} entry at row {row} is {value}, expected 0 or 1")]
    NotBinary {
        field: &'static str,
        row: usize,
        value: u8,
    },
    #[error("treatment indicator missing")]
    MissingTreatment,
    #[error("outcome missing")]
    MissingOutcome,
    #[error("confounder label missing")]
    MissingLabel,
    #[error("invalid fold count k={k} for n={n}")]
    InvalidFoldCount { n: usize, k: usize },
}

/// Failures of the numerical layers (transforms, learners, estimators, simulators).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("no well-conditioned transform after {0} draws")]
    DegenerateTransform(usize),
    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },
    #[error("treatment and label are collinear")]
    Collinearity,
    #[error("fold {fold} too small: {reason}")]
    FoldTooSmall { fold: usize, reason: String },
    #[error("residualized treatment has vanishing variance ({0:e})")]
    DegenerateResidualization(f64),
    #[error("zero distance to neighbour at point {point}")]
    ZeroDistance { point: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
