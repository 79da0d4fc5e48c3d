use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::RepresentationSet;
use crate::error::{DataError, Error, Result};
use crate::learners::{fit_autoencoder, AutoencoderConfig};
use crate::linalg::{sigmoid, standardize};
use crate::rng::{derive, normal, normals, seeded};
use crate::stats::{mean, sample_variance};

/// Reconstruction error share above which an encoding is reported as poor.
pub const POOR_ENCODING_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfoundingKind {
    Label,
    Complex,
    HcmProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfoundingSpec {
    pub kind: ConfoundingKind,
    pub true_ate: f64,
    pub p_treat_high: f64,
    pub p_treat_low: f64,
    pub outcome_noise_sd: f64,
    /// Magnitude `c` of the negative confounder effect on the outcome
    /// (label and product designs).
    pub label_coef: f64,
    pub coefficient_seed: u64,
    pub latent_dim: usize,
    /// Slope inside each `tanh` factor of the product design.
    pub product_sharpness: f64,
}

impl Default for ConfoundingSpec {
    fn default() -> Self {
        Self {
            kind: ConfoundingKind::Label,
            true_ate: 2.0,
            p_treat_high: 0.7,
            p_treat_low: 0.3,
            outcome_noise_sd: 1.0,
            label_coef: 3.0,
            coefficient_seed: 0,
            latent_dim: 5,
            product_sharpness: 50.0,
        }
    }
}

impl ConfoundingSpec {
    pub fn of_kind(kind: ConfoundingKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.p_treat_low, self.p_treat_high);
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidSpec(format!("need 0 < p_treat_low <= p_treat_high < 1, got {lo}, {hi}")));
        }
        if !(self.outcome_noise_sd > 0.0 && self.outcome_noise_sd.is_finite()) {
            return Err(Error::InvalidSpec("outcome_noise_sd must be > 0".into()));
        }
        if !self.true_ate.is_finite() || !self.label_coef.is_finite() {
            return Err(Error::InvalidSpec("true_ate and label_coef must be finite".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidSpec("latent_dim must be >= 1".into()));
        }
        if !(self.product_sharpness > 0.0) {
            return Err(Error::InvalidSpec("product_sharpness must be > 0".into()));
        }
        Ok(())
    }

    /// Propensity `p_low + (p_high − p_low)·(1 + s)/2` for a confounder `s ∈ [−1, 1]`.
    fn propensity(&self, s: f64) -> f64 {
        self.p_treat_low + (self.p_treat_high - self.p_treat_low) * 0.5 * (1.0 + s)
    }
}

/// True nuisance values per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub ate: f64,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub set: RepresentationSet,
    pub truth: Truth,
    pub warnings: Vec<String>,
}

/// Draws `t ~ Bernoulli(m)` and `y = g0 + ate·t + ε` row by row from `seed`.
fn draw(
    z: &DMatrix<f64>,
    label: Option<Vec<u8>>,
    m: Vec<f64>,
    g0: Vec<f64>,
    spec: &ConfoundingSpec,
    seed: u64,
) -> Result<SimulatedData> {
    let mut rng = seeded(seed);
    let n = m.len();
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let ti = rng.random_bool(m[i]) as u8;
        t.push(ti);
        y.push(g0[i] + spec.true_ate * ti as f64 + spec.outcome_noise_sd * normal(&mut rng));
    }
    let g1 = g0.iter().map(|g| g + spec.true_ate).collect();
    Ok(SimulatedData {
        set: RepresentationSet::new(z.clone(), Some(t), Some(y), label)?,
        truth: Truth {
            ate: spec.true_ate,
            g0,
            g1,
            m,
        },
        warnings: Vec::new(),
    })
}

/// Treatment and outcome driven by the binary label of `source`:
/// `m = p_high` or `p_low`, `y = ate·t − c·label + ε`.
pub fn gen_label_confounding(source: &RepresentationSet, spec: &ConfoundingSpec, seed: u64) -> Result<SimulatedData> {
    spec.validate()?;
    let label = source.label().ok_or(DataError::MissingLabel)?.to_vec();
    let m = label.iter().map(|&l| spec.propensity(if l == 1 { 1.0 } else { -1.0 })).collect();
    let g0 = label.iter().map(|&l| -spec.label_coef * l as f64).collect();
    draw(source.z(), Some(label), m, g0, spec, seed)
}

/// Confounding through low-dimensional codes `e` of the features:
/// `m = sigmoid(score)` with `score` the standardized `e·a`, and
/// `y = ate·t + e·b + ε` with every `b_j ≤ 0`.
#[derive(Debug, Clone)]
pub struct ComplexConfounding {
    z: DMatrix<f64>,
    codes: DMatrix<f64>,
    spec: ConfoundingSpec,
    propensity_coef: Vec<f64>,
    outcome_coef: Vec<f64>,
    propensity: Vec<f64>,
    /// Autoencoder reconstruction error as a share of total variance.
    pub reconstruction_share: Option<f64>,
    pub warnings: Vec<String>,
}

impl ComplexConfounding {
    /// Trains an autoencoder with `spec.latent_dim` codes on `z` and uses its
    /// standardized codes.
    pub fn new(z: &DMatrix<f64>, spec: &ConfoundingSpec, ae: &AutoencoderConfig) -> Result<Self> {
        spec.validate()?;
        let cfg = AutoencoderConfig {
            latent_dim: spec.latent_dim,
            ..ae.clone()
        };
        let model = fit_autoencoder(z, &cfg, derive(spec.coefficient_seed, 1))?;
        let centred = standardize(z);
        let total: f64 = centred.sds.iter().map(|s| s * s).sum::<f64>() * z.nrows() as f64;
        let share = (model.reconstruct(z)? - z).norm_squared() / total;
        let mut out = Self::from_codes(z, &model.encode(z)?, spec)?;
        out.reconstruction_share = Some(share);
        if share > POOR_ENCODING_SHARE {
            out.warnings.push(format!(
                "poor encoding: reconstruction error is {:.0}% of the feature variance",
                100.0 * share
            ));
        }
        Ok(out)
    }

    /// Uses the given codes (standardized column-wise) instead of training.
    pub fn from_codes(z: &DMatrix<f64>, codes: &DMatrix<f64>, spec: &ConfoundingSpec) -> Result<Self> {
        spec.validate()?;
        if codes.nrows() != z.nrows() {
            return Err(Error::Dimension {
                expected: z.nrows(),
                found: codes.nrows(),
            });
        }
        let k = codes.ncols();
        let mut rng = seeded(spec.coefficient_seed);
        let a = normals(&mut rng, k);
        let b = normals(&mut rng, k).into_iter().map(|v| -v.abs()).collect();
        let mut out = Self {
            z: z.clone(),
            codes: standardize(codes).x,
            spec: spec.clone(),
            propensity_coef: Vec::new(),
            outcome_coef: b,
            propensity: Vec::new(),
            reconstruction_share: None,
            warnings: Vec::new(),
        };
        out.set_propensity_coef(a);
        Ok(out)
    }

    fn set_propensity_coef(&mut self, a: Vec<f64>) {
        let score: Vec<f64> = (self.codes.clone() * nalgebra::DVector::from_column_slice(&a)).iter().copied().collect();
        let (mu, sd) = (mean(&score), sample_variance(&score).sqrt());
        let sd = if sd > 0.0 { sd } else { 1.0 };
        self.propensity = score.iter().map(|s| sigmoid((s - mu) / sd)).collect();
        self.propensity_coef = a;
    }

    /// Replaces the outcome coefficients (for example by zeros).
    pub fn with_outcome_coef(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.codes.ncols() {
            return Err(Error::Dimension {
                expected: self.codes.ncols(),
                found: b.len(),
            });
        }
        self.outcome_coef = b;
        Ok(self)
    }

    pub fn propensity_coef(&self) -> &[f64] {
        &self.propensity_coef
    }

    pub fn outcome_coef(&self) -> &[f64] {
        &self.outcome_coef
    }

    pub fn codes(&self) -> &DMatrix<f64> {
        &self.codes
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn draw(&self, seed: u64) -> Result<SimulatedData> {
        let g0 = (&self.codes * nalgebra::DVector::from_column_slice(&self.outcome_coef))
            .iter()
            .copied()
            .collect();
        let mut data = draw(&self.z, None, self.propensity.clone(), g0, &self.spec, seed)?;
        data.warnings = self.warnings.clone();
        Ok(data)
    }
}

/// Autoencoder-code confounding on `z` with default autoencoder settings.
pub fn gen_complex_confounding(z: &DMatrix<f64>, spec: &ConfoundingSpec, seed: u64) -> Result<SimulatedData> {
    ComplexConfounding::new(z, spec, &AutoencoderConfig::new(spec.latent_dim))?.draw(seed)
}

/// Confounding through `s = Π_j tanh(κ·ẑ_j)` over all standardized features:
/// `m = p_low + (p_high − p_low)(1 + s)/2`, `y = ate·t − c·s + ε`.
#[derive(Debug, Clone)]
pub struct ProductConfounding {
    z: DMatrix<f64>,
    product: Vec<f64>,
    spec: ConfoundingSpec,
}

impl ProductConfounding {
    pub fn new(z: &DMatrix<f64>, spec: &ConfoundingSpec) -> Result<Self> {
        spec.validate()?;
        let st = standardize(z);
        let product = st
            .x
            .row_iter()
            .map(|row| row.iter().map(|v| (spec.product_sharpness * v).tanh()).product())
            .collect();
        Ok(Self {
            z: z.clone(),
            product,
            spec: spec.clone(),
        })
    }

    pub fn product(&self) -> &[f64] {
        &self.product
    }

    pub fn draw(&self, seed: u64) -> Result<SimulatedData> {
        let m = self.product.iter().map(|&s| self.spec.propensity(s)).collect();
        let g0 = self.product.iter().map(|&s| -self.spec.label_coef * s).collect();
        draw(&self.z, None, m, g0, &self.spec, seed)
    }
}

pub fn gen_hcm_product_confounding(z: &DMatrix<f64>, spec: &ConfoundingSpec, seed: u64) -> Result<SimulatedData> {
    ProductConfounding::new(z, spec)?.draw(seed)
}
