//! Generalized tree-based wavelet transform (GTBWT).
//!
//! A data-adaptive orthogonal wavelet transform for functions sampled on a
//! point cloud. Before each filtering level the approximation coefficients
//! are reordered along a short path through the level's feature points;
//! the permutations come from a [`TreePlan`] built once from the data, and
//! the filtering itself is an ordinary two-channel orthogonal filter bank.
//!
//! The crate also carries the image-denoising pipelines built on the
//! transform: hard thresholding, cycle spinning over randomized trees,
//! subimage averaging and the iterative/oracle variants.

pub mod denoise;
pub mod dwt;
mod error;
pub mod filters;
pub mod imaging;
pub mod ordering;
pub mod separable;
pub mod sweep;
pub mod transform;
pub mod tree;

pub use denoise::{DenoiseParams, DenoiseReport, StageReport};
pub use dwt::{analyze_level, synthesize_level};
pub use error::{Error, Result};
pub use filters::{filter_set, WaveletFilterSet, KNOWN_FILTERS};
pub use imaging::{Image, PatchConfig, PatchMode};
pub use ordering::{FeatureMatrix, Metric, PathOrder, SearchStrategy, SquaredEuclidean};
pub use transform::{Band, CoeffIndex, Coefficients};
pub use tree::{PathPolicy, TreeConfig, TreePlan};

/// Random generator used for every seeded operation: ChaCha with 8 rounds,
/// seeded through `SeedableRng::seed_from_u64`.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Identifier of [`Rng`], recorded in reports.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Generator for tree `index` of a seeded ensemble: the seed selects the
/// key and the tree index selects the ChaCha stream.
pub fn stream_rng(seed: u64, index: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
