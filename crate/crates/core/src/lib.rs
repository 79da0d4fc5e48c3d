//! Treatment-effect estimation from pre-trained representations.
//!
//! The crate estimates average treatment effects with cross-fitted,
//! doubly-robust scores computed on latent features, and ships the
//! simulators used to check when that inference is valid: invertible linear
//! transforms of the feature space, intrinsic-dimension estimators, and
//! hierarchical-composition regression targets.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: dataset model, PTRZ/CSV files, cross-fitting folds
//! - [`transforms`]: Haar rotations, invertible maps, the lasso sparsity curve
//! - [`learners`]: OLS, lasso, logistic (L2/L1), MLP, random forest, autoencoder
//! - [`estimators`]: naive, oracle, S-learner, DML (AIPW and partialling-out)
//! - [`intrinsic_dim`]: kNN-based MLE, ESS and local-PCA estimators
//! - [`simulate`]: confounding generators, HCM targets, repeated experiments
//!
//! Loops over repetitions, trees, folds and points run through [`par`], which
//! uses rayon with the default `parallel` feature and falls back to serial
//! iteration without it. Outputs are identical in both modes.

pub mod data;
pub mod error;
pub mod estimators;
pub mod intrinsic_dim;
pub mod learners;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod transforms;

pub use data::{FoldAssignment, RepresentationSet};
pub use error::{DataError, Error, LoadError, Result};
