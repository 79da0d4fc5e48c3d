//! Ground-truth generators and repeated-experiment runners.
//!
//! Generators return a [`SimulatedData`]: the dataset plus the true ATE and
//! the true nuisance values of every row. Runners take a [`Scenario`] (any
//! seeded generator) and fan repetitions out through [`crate::par`].

mod confounding;
mod experiments;
mod hcm;
mod manifold;

pub use confounding::{
    gen_complex_confounding, gen_hcm_product_confounding, gen_label_confounding, ComplexConfounding,
    ConfoundingKind, ConfoundingSpec, ProductConfounding, SimulatedData, Truth, POOR_ENCODING_SHARE,
};
pub use experiments::{
    run_coverage_experiment, run_normality_experiment, run_rate_experiment, CoverageReport, EstimatorSummary,
    FixedLabelScenario, LabelScenario, NormalityReport, RateReport, RateRow, RateSpec, ReplicateRow, Scenario,
    ScenarioSpec,
};
pub use hcm::{gen_hcm_function, Combiner, HcmFunction, HcmNode, HcmSpec, SineTerm};
pub use manifold::{gen_synthetic_manifold, ManifoldSample, ManifoldSpec, SmoothMap};
