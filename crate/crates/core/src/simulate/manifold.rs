use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, normal, normals, seeded};
use crate::transforms::{sample_orthogonal, LinearTransform};

/// Random smooth embedding of `[-1, 1]^manifold_dim` into `R^ambient_dim`.
///
/// Each ambient coordinate is a linear function of the latent point plus a mix
/// of shared sine features. The label `1{u₀ > 0}` can be added along a fixed
/// direction `μ` so that it is exactly a linear function of the noise-free
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldSpec {
    pub ambient_dim: usize,
    pub manifold_dim: usize,
    pub map_seed: u64,
    /// Apply a Haar rotation (drawn from the map seed) after embedding.
    pub rotate: bool,
    /// Number of shared sine features; `None` means `2 · manifold_dim`.
    pub sine_features: Option<usize>,
    pub frequency: f64,
    pub amplitude: f64,
    /// Norm of `μ`; 0 leaves the label out of the features.
    pub label_shift: f64,
    /// Put `μ` on coordinate 0 and keep every other effect off that coordinate.
    pub label_axis: bool,
    /// Gaussian noise added before the rotation; with `label_axis` coordinate 0
    /// stays noise-free.
    pub noise_sd: f64,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        Self {
            ambient_dim: 64,
            manifold_dim: 3,
            map_seed: 0,
            rotate: false,
            sine_features: None,
            frequency: 1.0,
            amplitude: 0.5,
            label_shift: 0.0,
            label_axis: false,
            noise_sd: 0.0,
        }
    }
}

impl ManifoldSpec {
    pub fn new(ambient_dim: usize, manifold_dim: usize, map_seed: u64) -> Self {
        Self {
            ambient_dim,
            manifold_dim,
            map_seed,
            ..Self::default()
        }
    }

    pub fn rotated(mut self) -> Self {
        self.rotate = true;
        self
    }

    pub fn with_label(mut self, shift: f64, noise_sd: f64) -> Self {
        self.label_shift = shift;
        self.noise_sd = noise_sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.ambient_dim, self.manifold_dim);
        if m == 0 || m > d {
            return Err(Error::InvalidSpec(format!("manifold dimension {m} must lie in 1..={d}")));
        }
        if self.label_axis && d < 2 {
            return Err(Error::InvalidSpec("label axis needs ambient dimension >= 2".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.label_shift >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidSpec("noise, shift and amplitude must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// A sample from [`gen_synthetic_manifold`].
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSample {
    pub z: DMatrix<f64>,
    /// `n × manifold_dim` latent coordinates.
    pub latent: DMatrix<f64>,
    pub labels: Vec<u8>,
}

/// The embedding itself, reusable across samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMap {
    linear: DMatrix<f64>,
    sine_weights: DMatrix<f64>,
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    shift: DVector<f64>,
    rotation: Option<LinearTransform>,
    identity: bool,
    label_axis: bool,
}

impl SmoothMap {
    pub fn new(spec: &ManifoldSpec) -> Result<Self> {
        spec.validate()?;
        let (d, m) = (spec.ambient_dim, spec.manifold_dim);
        let identity = m == d;
        let f = if identity { 0 } else { spec.sine_features.unwrap_or(2 * m) };
        let mut rng = seeded(spec.map_seed);

        let mut linear = if identity {
            DMatrix::identity(d, d)
        } else {
            DMatrix::from_vec(d, m, normals(&mut rng, d * m)).qr().q()
        };
        let mut sine_weights = DMatrix::zeros(d, f);
        for k in 0..f {
            let col = DVector::from_vec(normals(&mut rng, d));
            sine_weights.set_column(k, &(col.normalize() * spec.amplitude));
        }
        let frequencies = DMatrix::from_vec(f, m, normals(&mut rng, f * m)) * spec.frequency;
        let phases: Vec<f64> = (0..f).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();

        let mut shift = DVector::zeros(d);
        if spec.label_axis {
            linear.row_mut(0).fill(0.0);
            sine_weights.row_mut(0).fill(0.0);
            shift[0] = spec.label_shift;
        } else if spec.label_shift > 0.0 {
            let mut dir = DVector::from_vec(normals(&mut rng, d));
            if m + f < d {
                let mut span = DMatrix::zeros(d, m + f);
                span.columns_mut(0, m).copy_from(&linear);
                span.columns_mut(m, f).copy_from(&sine_weights);
                let basis = span.qr().q();
                dir -= &basis * basis.tr_mul(&dir);
            }
            shift = dir.normalize() * spec.label_shift;
        }
        let rotation = if spec.rotate {
            Some(sample_orthogonal(d, derive(spec.map_seed, 1))?)
        } else {
            None
        };
        Ok(Self {
            linear,
            sine_weights,
            frequencies,
            phases,
            shift,
            rotation,
            identity,
            label_axis: spec.label_axis,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.linear.nrows()
    }

    pub fn manifold_dim(&self) -> usize {
        self.linear.ncols()
    }

    /// Direction carrying the label in the (rotated) output coordinates.
    pub fn label_direction(&self) -> DVector<f64> {
        match &self.rotation {
            Some(q) => &q.q * &self.shift,
            None => self.shift.clone(),
        }
    }

    /// Noise-free embedding of the rows of `latent`, labels included.
    pub fn embed(&self, latent: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.rotate(self.embed_unrotated(latent)?)
    }

    fn embed_unrotated(&self, latent: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if latent.ncols() != self.manifold_dim() {
            return Err(Error::Dimension {
                expected: self.manifold_dim(),
                found: latent.ncols(),
            });
        }
        let mut z = latent * self.linear.transpose();
        if !self.identity && !self.phases.is_empty() {
            let mut s = latent * self.frequencies.transpose();
            for (k, mut col) in s.column_iter_mut().enumerate() {
                col.apply(|v| *v = (*v + self.phases[k]).sin());
            }
            z += s * self.sine_weights.transpose();
        }
        if self.shift.iter().any(|&v| v != 0.0) {
            for i in 0..latent.nrows() {
                if latent[(i, 0)] > 0.0 {
                    for j in 0..z.ncols() {
                        z[(i, j)] += self.shift[j];
                    }
                }
            }
        }
        Ok(z)
    }

    fn rotate(&self, z: DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.rotation {
            Some(q) => q.apply_matrix(&z),
            None => Ok(z),
        }
    }

    /// `n` points: latent draws, embedding, noise, then the rotation, all from `seed`.
    pub fn sample(&self, n: usize, noise_sd: f64, seed: u64) -> Result<ManifoldSample> {
        let m = self.manifold_dim();
        let mut rng = seeded(seed);
        let latent = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let mut z = self.embed_unrotated(&latent)?;
        if noise_sd > 0.0 {
            let first = self.label_axis as usize;
            for j in first..z.ncols() {
                for i in 0..n {
                    z[(i, j)] += noise_sd * normal(&mut rng);
                }
            }
        }
        let labels = (0..n).map(|i| (latent[(i, 0)] > 0.0) as u8).collect();
        Ok(ManifoldSample {
            z: self.rotate(z)?,
            latent,
            labels,
        })
    }
}

/// Samples `n` points of a smooth `manifold_dim`-dimensional manifold in
/// `R^ambient_dim`, with labels `1{u₀ > 0}`. The map is fixed by
/// `spec.map_seed`; the points by `seed`. With `manifold_dim == ambient_dim`
/// the map is the identity and the sample fills the cube.
pub fn gen_synthetic_manifold(n: usize, spec: &ManifoldSpec, seed: u64) -> Result<ManifoldSample> {
    SmoothMap::new(spec)?.sample(n, spec.noise_sd, seed)
}
