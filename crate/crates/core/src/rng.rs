//! Seed plumbing. Every random draw in the crate comes from a `ChaCha8Rng`
//! seeded through here, and derived streams use `seed + index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `index`-th derived stream.
pub fn derive(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}
