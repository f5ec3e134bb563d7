//! Seeded inputs shared by the benchmarks.

use gtbwt::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `count` points of dimension `dim`, uniform in the unit cube.
pub fn random_points(count: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..count * dim).map(|_| rng.random_range(0.0..1.0)).collect();
    FeatureMatrix::new(dim, data).expect("dimensions are consistent")
}
