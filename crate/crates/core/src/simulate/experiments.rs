use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::confounding::{gen_label_confounding, ComplexConfounding, ConfoundingKind, ConfoundingSpec, ProductConfounding, SimulatedData};
use super::hcm::{gen_hcm_function, HcmSpec};
use super::manifold::{ManifoldSpec, SmoothMap};
use crate::data::RepresentationSet;
use crate::error::{Error, Result};
use crate::estimators::{AteReport, EstimatorSpec, DEFAULT_LEVEL};
use crate::learners::{fit, AutoencoderConfig, LearnerSpec, MlpConfig};
use crate::par;
use crate::rng::{derive, seeded};
use crate::stats::{ks_test_normal, mean, sample_variance};

/// Offset separating the treatment/outcome stream from the feature stream of
/// the same repetition.
const OUTCOME_STREAM: u64 = 1 << 40;

/// A data-generating process; `draw(seed)` must be a pure function of `seed`.
pub trait Scenario: Sync {
    fn draw(&self, seed: u64) -> Result<SimulatedData>;
}

impl Scenario for ComplexConfounding {
    fn draw(&self, seed: u64) -> Result<SimulatedData> {
        ComplexConfounding::draw(self, seed)
    }
}

impl Scenario for ProductConfounding {
    fn draw(&self, seed: u64) -> Result<SimulatedData> {
        ProductConfounding::draw(self, seed)
    }
}

/// Label confounding on fresh manifold features each draw.
#[derive(Debug, Clone)]
pub struct LabelScenario {
    n: usize,
    map: SmoothMap,
    noise_sd: f64,
    spec: ConfoundingSpec,
}

impl LabelScenario {
    pub fn new(n: usize, manifold: &ManifoldSpec, spec: &ConfoundingSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            n,
            map: SmoothMap::new(manifold)?,
            noise_sd: manifold.noise_sd,
            spec: spec.clone(),
        })
    }

    pub fn map(&self) -> &SmoothMap {
        &self.map
    }
}

impl Scenario for LabelScenario {
    fn draw(&self, seed: u64) -> Result<SimulatedData> {
        let sample = self.map.sample(self.n, self.noise_sd, seed)?;
        let source = RepresentationSet::new(sample.z, None, None, Some(sample.labels))?;
        gen_label_confounding(&source, &self.spec, derive(seed, OUTCOME_STREAM))
    }
}

/// Label confounding on a fixed labelled feature set.
#[derive(Debug, Clone)]
pub struct FixedLabelScenario {
    source: RepresentationSet,
    spec: ConfoundingSpec,
}

impl FixedLabelScenario {
    pub fn new(source: RepresentationSet, spec: &ConfoundingSpec) -> Result<Self> {
        spec.validate()?;
        source.label().ok_or(crate::error::DataError::MissingLabel)?;
        Ok(Self {
            source,
            spec: spec.clone(),
        })
    }
}

impl Scenario for FixedLabelScenario {
    fn draw(&self, seed: u64) -> Result<SimulatedData> {
        gen_label_confounding(&self.source, &self.spec, seed)
    }
}

/// Serializable recipe for a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub manifold: ManifoldSpec,
    pub confounding: ConfoundingSpec,
    /// Autoencoder used by the complex design.
    pub autoencoder: AutoencoderConfig,
    /// Seed of the fixed feature sample used by the complex and product designs.
    pub feature_seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            manifold: ManifoldSpec::default(),
            confounding: ConfoundingSpec::default(),
            autoencoder: AutoencoderConfig::default(),
            feature_seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Builds the scenario. With `features` given, the label design resamples
    /// outcomes on that fixed set and the other designs use its `z`; without,
    /// features come from the manifold generator.
    pub fn build(&self, features: Option<RepresentationSet>) -> Result<Box<dyn Scenario>> {
        self.confounding.validate()?;
        let fixed_z = |features: Option<RepresentationSet>| -> Result<DMatrix<f64>> {
            match features {
                Some(set) => Ok(set.z().clone()),
                None => Ok(SmoothMap::new(&self.manifold)?
                    .sample(self.n, self.manifold.noise_sd, self.feature_seed)?
                    .z),
            }
        };
        Ok(match self.confounding.kind {
            ConfoundingKind::Label => match features {
                Some(set) => Box::new(FixedLabelScenario::new(set, &self.confounding)?),
                None => Box::new(LabelScenario::new(self.n, &self.manifold, &self.confounding)?),
            },
            ConfoundingKind::Complex => {
                let z = fixed_z(features)?;
                Box::new(ComplexConfounding::new(&z, &self.confounding, &self.autoencoder)?)
            }
            ConfoundingKind::HcmProduct => {
                let z = fixed_z(features)?;
                Box::new(ProductConfounding::new(&z, &self.confounding)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub rep: usize,
    pub estimator: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub reps: usize,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    /// Monte Carlo standard error of the mean bias.
    pub bias_mc_se: f64,
    pub coverage: f64,
    pub mean_ci_width: f64,
    pub mean_se: f64,
    pub sd_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub true_ate: f64,
    pub level: f64,
    pub reps: usize,
    pub seed: u64,
    /// Ordered by repetition, then by estimator position.
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<EstimatorSummary>,
}

impl CoverageReport {
    pub fn summary_for(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.summary.iter().find(|s| s.estimator == estimator)
    }

    /// `rep,estimator,estimate,se,ci_low,ci_high,covered` with a header row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rep", "estimator", "estimate", "se", "ci_low", "ci_high", "covered"])
            .map_err(|e| Error::Numerics(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.rep.to_string(),
                r.estimator.clone(),
                r.estimate.to_string(),
                r.se.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                (r.covered as u8).to_string(),
            ])
            .map_err(|e| Error::Numerics(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerics(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn summarize(name: &str, rows: &[&ReplicateRow], truth: f64) -> EstimatorSummary {
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let k = rows.len() as f64;
    EstimatorSummary {
        estimator: name.to_string(),
        reps: rows.len(),
        mean_estimate: mean(&est),
        mean_bias: mean(&est) - truth,
        bias_mc_se: (sample_variance(&est) / k).sqrt(),
        coverage: rows.iter().filter(|r| r.covered).count() as f64 / k,
        mean_ci_width: rows.iter().map(|r| r.ci_high - r.ci_low).sum::<f64>() / k,
        mean_se: rows.iter().map(|r| r.se).sum::<f64>() / k,
        sd_estimate: sample_variance(&est).sqrt(),
    }
}

/// Runs every estimator on `reps` draws; repetition `r` uses data seed
/// `seed + r`, and each estimator gets that same seed for folds and learners.
pub fn run_coverage_experiment(
    scenario: &dyn Scenario,
    estimators: &[EstimatorSpec],
    reps: usize,
    seed: u64,
    level: f64,
) -> Result<CoverageReport> {
    if reps < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 repetitions, got {reps}")));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidSpec("no estimators given".into()));
    }
    let per_rep = par::try_map(reps, |r| -> Result<(f64, Vec<ReplicateRow>)> {
        let rep_seed = derive(seed, r as u64);
        let data = scenario.draw(rep_seed)?;
        let truth = data.truth.ate;
        let rows = estimators
            .iter()
            .map(|spec| {
                let rep: AteReport = spec.run(&data.set, rep_seed, level)?;
                Ok(ReplicateRow {
                    rep: r,
                    estimator: spec.label(),
                    estimate: rep.estimate,
                    se: rep.std_error,
                    ci_low: rep.ci_low,
                    ci_high: rep.ci_high,
                    covered: rep.covers(truth),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((truth, rows))
    })?;
    let true_ate = per_rep[0].0;
    let rows: Vec<ReplicateRow> = per_rep.into_iter().flat_map(|(_, rows)| rows).collect();
    let summary = estimators
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let mine: Vec<&ReplicateRow> = rows.iter().skip(k).step_by(estimators.len()).collect();
            summarize(&spec.label(), &mine, true_ate)
        })
        .collect();
    Ok(CoverageReport {
        true_ate,
        level,
        reps,
        seed,
        rows,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub estimator: String,
    /// `(estimate − truth) / std_error` per repetition.
    pub standardized: Vec<f64>,
    pub ks_statistic: f64,
    pub p_value: f64,
}

/// Standardized estimates over `reps` draws and their KS test against N(0, 1).
pub fn run_normality_experiment(
    scenario: &dyn Scenario,
    estimator: &EstimatorSpec,
    reps: usize,
    seed: u64,
) -> Result<NormalityReport> {
    if reps < 50 {
        return Err(Error::InvalidSpec(format!("need at least 50 repetitions, got {reps}")));
    }
    let report = run_coverage_experiment(scenario, std::slice::from_ref(estimator), reps, seed, DEFAULT_LEVEL)?;
    let standardized: Vec<f64> = report
        .rows
        .iter()
        .map(|r| (r.estimate - report.true_ate) / r.se)
        .collect();
    let (ks_statistic, p_value) = ks_test_normal(&standardized);
    Ok(NormalityReport {
        estimator: estimator.label(),
        standardized,
        ks_statistic,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSpec {
    pub manifold_dim: usize,
    pub ambient_dims: Vec<usize>,
    /// Training sizes, ascending.
    pub n_grid: Vec<usize>,
    pub test_n: usize,
    /// Independent training samples (and initializations) averaged per cell.
    pub replicates: usize,
    pub mlp: MlpConfig,
    /// Manifold settings other than the dimensions (sine features, amplitude…).
    pub manifold: ManifoldSpec,
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            manifold_dim: 2,
            ambient_dims: vec![10, 100],
            n_grid: vec![500, 1000, 2000, 4000],
            test_n: 10_000,
            replicates: 5,
            mlp: MlpConfig::default(),
            manifold: ManifoldSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub ambient_dim: usize,
    pub n: usize,
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Slope of `ln mse` on `ln n` per ambient dimension.
    pub slopes: Vec<(usize, f64)>,
    pub constraint_set: Vec<(f64, usize)>,
}

impl RateReport {
    pub fn mse(&self, ambient_dim: usize, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.ambient_dim == ambient_dim && r.n == n)
            .map(|r| r.test_mse)
    }
}

fn log_log_slope(ns: &[usize], mse: &[f64]) -> f64 {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = mse.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Held-out MLP error on `f₀ = hcm(u)` observed through a manifold embedding
/// `z = ψ(u)`, for each ambient dimension and training size. The target is
/// fixed by `seed`; each ambient dimension gets its own embedding, and each
/// `(d, n)` cell averages the error of `replicates` fits on fresh samples.
pub fn run_rate_experiment(hcm: &HcmSpec, spec: &RateSpec, seed: u64) -> Result<RateReport> {
    if spec.n_grid.is_empty() || spec.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec("n_grid must be non-empty and strictly ascending".into()));
    }
    if spec.ambient_dims.is_empty() || spec.test_n == 0 || spec.replicates == 0 {
        return Err(Error::InvalidSpec("need ambient dimensions, test points and replicates".into()));
    }
    if hcm.inputs() > spec.manifold_dim {
        return Err(Error::InvalidSpec(format!(
            "HCM reads {} coordinates but the manifold has {}",
            hcm.inputs(),
            spec.manifold_dim
        )));
    }
    let f0 = gen_hcm_function(hcm, seed)?;
    let maps = spec
        .ambient_dims
        .iter()
        .map(|&d| {
            SmoothMap::new(&ManifoldSpec {
                ambient_dim: d,
                manifold_dim: spec.manifold_dim,
                map_seed: derive(seed, d as u64),
                ..spec.manifold.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let test_latent = latent_sample(spec.test_n, spec.manifold_dim, derive(seed, OUTCOME_STREAM));
    let test_target = f0.evaluate_rows(&test_latent)?;

    let reps = spec.replicates;
    let cells: Vec<(usize, usize, usize)> = (0..maps.len())
        .flat_map(|a| (0..spec.n_grid.len()).flat_map(move |b| (0..reps).map(move |r| (a, b, r))))
        .collect();
    let fits = par::try_map(cells.len(), |c| -> Result<f64> {
        let (a, b, _) = cells[c];
        let n = spec.n_grid[b];
        let cell_seed = derive(seed, 1 + c as u64);
        let latent = latent_sample(n, spec.manifold_dim, cell_seed);
        let z = maps[a].embed(&latent)?;
        let target = f0.evaluate_rows(&latent)?;
        let model = fit(&LearnerSpec::MlpReg(spec.mlp.clone()), &z, &target, cell_seed)?;
        let pred = model.predict(&maps[a].embed(&test_latent)?)?;
        Ok(pred.iter().zip(&test_target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / spec.test_n as f64)
    })?;
    let mses: Vec<f64> = fits.chunks(reps).map(mean).collect();

    let rows: Vec<RateRow> = cells
        .iter()
        .step_by(reps)
        .zip(&mses)
        .map(|(&(a, b, _), &mse)| RateRow {
            ambient_dim: spec.ambient_dims[a],
            n: spec.n_grid[b],
            test_mse: mse,
        })
        .collect();
    let slopes = spec
        .ambient_dims
        .iter()
        .enumerate()
        .map(|(a, &d)| {
            let k = spec.n_grid.len();
            (d, log_log_slope(&spec.n_grid, &mses[a * k..(a + 1) * k]))
        })
        .collect();
    Ok(RateReport {
        rows,
        slopes,
        constraint_set: f0.constraint_set().to_vec(),
    })
}

fn latent_sample(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    DMatrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;
    use crate::rng::normals;
    use crate::stats::ks_test_normal;

    fn label_scenario(n: usize) -> LabelScenario {
        LabelScenario::new(
            n,
            &ManifoldSpec::new(8, 2, 1).with_label(2.0, 0.1),
            &ConfoundingSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_is_calibrated_and_naive_is_not() {
        let sc = label_scenario(500);
        let report = run_coverage_experiment(&sc, &[EstimatorSpec::Oracle, EstimatorSpec::Naive], 200, 3, 0.95).unwrap();
        let oracle = report.summary_for("oracle").unwrap();
        let naive = report.summary_for("naive").unwrap();
        assert!((0.90..=0.99).contains(&oracle.coverage), "{oracle:?}");
        assert!(naive.coverage < 0.2, "{naive:?}");
        assert!(naive.mean_bias < -0.5);
        assert_eq!(report.rows.len(), 400);
        assert_eq!(report.rows[1].rep, 0);
        assert_eq!(report.rows[1].estimator, "naive");
    }

    #[test]
    fn serial_and_parallel_tables_match() {
        let sc = label_scenario(200);
        let specs = [
            EstimatorSpec::Naive,
            EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
        ];
        let a = run_coverage_experiment(&sc, &specs, 8, 11, 0.95).unwrap();
        let b = par::serial(|| run_coverage_experiment(&sc, &specs, 8, 11, 0.95)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        let again = run_coverage_experiment(&sc, &specs, 8, 11, 0.95).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn repetition_seed_is_seed_plus_index() {
        let sc = label_scenario(100);
        let a = run_coverage_experiment(&sc, &[EstimatorSpec::Naive], 4, 20, 0.95).unwrap();
        let b = run_coverage_experiment(&sc, &[EstimatorSpec::Naive], 3, 21, 0.95).unwrap();
        assert_eq!(a.rows[1].estimate, b.rows[0].estimate);
        assert_eq!(a.rows[3].estimate, b.rows[2].estimate);
    }

    #[test]
    fn csv_layout() {
        let sc = label_scenario(60);
        let csv = run_coverage_experiment(&sc, &[EstimatorSpec::Naive], 2, 0, 0.95)
            .unwrap()
            .to_csv()
            .unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("rep,estimator,estimate,se,ci_low,ci_high,covered"));
        assert!(lines.next().unwrap().starts_with("0,naive,"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn too_few_repetitions() {
        let sc = label_scenario(60);
        assert!(run_coverage_experiment(&sc, &[EstimatorSpec::Naive], 1, 0, 0.95).is_err());
        assert!(run_normality_experiment(&sc, &EstimatorSpec::Naive, 49, 0).is_err());
    }

    #[test]
    fn ks_null_calibration() {
        let passing = (0..200)
            .filter(|&s| {
                let mut rng = seeded(s);
                ks_test_normal(&normals(&mut rng, 200)).1 > 0.01
            })
            .count();
        assert!(passing >= 190, "{passing}");
    }

    #[test]
    fn normality_of_oracle_and_bias_of_naive() {
        let sc = label_scenario(400);
        let good = run_normality_experiment(&sc, &EstimatorSpec::Oracle, 200, 1).unwrap();
        assert!(good.p_value > 0.01, "{}", good.p_value);
        let bad = run_normality_experiment(&sc, &EstimatorSpec::Naive, 200, 1).unwrap();
        assert!(bad.p_value < 0.01);
        assert_eq!(good.standardized.len(), 200);
    }

    #[test]
    fn scenario_spec_builds_every_kind() {
        let mut spec = ScenarioSpec {
            n: 120,
            manifold: ManifoldSpec::new(6, 2, 0),
            autoencoder: AutoencoderConfig {
                hidden: vec![8],
                epochs: 5,
                ..AutoencoderConfig::new(2)
            },
            ..ScenarioSpec::default()
        };
        spec.confounding.latent_dim = 2;
        for kind in [ConfoundingKind::Label, ConfoundingKind::Complex, ConfoundingKind::HcmProduct] {
            spec.confounding.kind = kind;
            let sc = spec.build(None).unwrap();
            let d = sc.draw(4).unwrap();
            assert_eq!(d.set.n(), 120);
            assert_eq!(d, sc.draw(4).unwrap());
        }
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<ScenarioSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn fixed_source_needs_labels() {
        let mut rng = seeded(0);
        let z = DMatrix::from_vec(10, 2, normals(&mut rng, 20));
        let set = RepresentationSet::new(z, None, None, None).unwrap();
        assert!(ScenarioSpec::default().build(Some(set)).is_err());
    }

    #[test]
    fn constant_target_is_learned_exactly() {
        let spec = RateSpec {
            ambient_dims: vec![5],
            n_grid: vec![100, 200],
            test_n: 500,
            replicates: 2,
            mlp: MlpConfig::new(1, 8).with_epochs(20),
            ..RateSpec::default()
        };
        let constant = HcmSpec::Constant { value: 1.5 };
        let report = run_rate_experiment(&constant, &spec, 3).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.test_mse < 1e-4), "{:?}", report.rows);
    }

    #[test]
    fn rate_spec_checks() {
        let hcm = HcmSpec::balanced(1, 2, 2, 2.0);
        let bad_grid = RateSpec {
            n_grid: vec![200, 100],
            ..RateSpec::default()
        };
        assert!(run_rate_experiment(&hcm, &bad_grid, 0).is_err());
        let too_wide = HcmSpec::leaf(5);
        assert!(run_rate_experiment(&too_wide, &RateSpec::default(), 0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let ns = [100, 200, 400, 800];
        let mse: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.8)).collect();
        assert!((log_log_slope(&ns, &mse) + 0.8).abs() < 1e-12);
    }
}
