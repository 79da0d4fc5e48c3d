//! Symmetric MLP autoencoder with a linear bottleneck.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mlp::{train, Activation, MlpConfig, Network, Task};
use super::Diagnostics;
use crate::error::{Error, Result};
use crate::linalg::standardize;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    /// Encoder widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 5,
            hidden: vec![256, 64],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            patience: 10,
            validation_fraction: 0.1,
        }
    }
}

impl AutoencoderConfig {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            ..Self::default()
        }
    }

    fn training(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    network: Network,
    latent_layer: usize,
    latent_dim: usize,
    means: Vec<f64>,
    sds: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Autoencoder {
    fn scale(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::Dimension {
                expected: self.means.len(),
                found: x.ncols(),
            });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.sds[j]))
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// `n × latent_dim` bottleneck activations.
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.network.forward_to(&self.scale(x)?, self.latent_layer))
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = self.network.forward(&self.scale(x)?);
        for j in 0..out.ncols() {
            let (m, s) = (self.means[j], self.sds[j]);
            out.column_mut(j).apply(|v| *v = *v * s + m);
        }
        Ok(out)
    }

    /// Mean squared reconstruction error per entry.
    pub fn reconstruction_mse(&self, x: &DMatrix<f64>) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok((r - x).norm_squared() / (x.nrows() * x.ncols()) as f64)
    }
}

/// Trains on reconstruction MSE of the standardized inputs.
pub fn fit_autoencoder(x: &DMatrix<f64>, cfg: &AutoencoderConfig, seed: u64) -> Result<Autoencoder> {
    let d = x.ncols();
    if cfg.latent_dim == 0 || cfg.latent_dim > d {
        return Err(Error::InvalidSpec(format!("latent_dim {} must lie in 1..={d}", cfg.latent_dim)));
    }
    let training = cfg.training();
    training.validate()?;
    if x.nrows() < 2 || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerics("autoencoder needs >= 2 finite rows".into()));
    }
    let st = standardize(x);

    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(cfg.latent_dim);
    sizes.extend(cfg.hidden.iter().rev());
    sizes.push(d);
    let mut acts = vec![cfg.activation; cfg.hidden.len()];
    acts.push(Activation::Identity);
    acts.extend(vec![cfg.activation; cfg.hidden.len()]);
    acts.push(Activation::Identity);

    let mut rng = seeded(seed);
    let mut network = Network::new(&sizes, &acts, &mut rng);
    let stats = train(&mut network, &st.x, &st.x, Task::Regression, &training, &mut rng)?;
    Ok(Autoencoder {
        network,
        latent_layer: cfg.hidden.len() + 1,
        latent_dim: cfg.latent_dim,
        means: st.means,
        sds: st.sds,
        diagnostics: Diagnostics {
            final_loss: stats.best_loss,
            iterations: stats.epochs,
            converged: stats.stopped_early,
            lambda: None,
        },
    })
}
