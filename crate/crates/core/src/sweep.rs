//! m-term approximation of an image under three transforms: the adaptive
//! tree transform, the plain 1D transform of the column-stacked image and
//! the 2D separable transform.

use crate::error::{Error, Result};
use crate::filters::WaveletFilterSet;
use crate::imaging::{extract_patches, psnr, Image, PatchConfig, PatchMode};
use crate::ordering::{SearchStrategy, SquaredEuclidean};
use crate::separable::{decompose_2d, reconstruct_2d};
use crate::transform::{decompose, reconstruct};
use crate::tree::{build_generalized_tree, PathPolicy, TreeConfig, TreePlan};

/// Reconstructions within this distance of the original in every pixel
/// are reported as lossless (infinite PSNR); the gap is rounding error.
pub const LOSSLESS_TOLERANCE: f64 = 1e-9;

fn sweep_psnr(reference: &Image, test: &Image) -> Result<f64> {
    let exact = reference.pixels().iter().zip(test.pixels()).all(|(a, b)| (a - b).abs() < LOSSLESS_TOLERANCE);
    if exact {
        return Ok(f64::INFINITY);
    }
    psnr(reference, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub psnr_gtbwt: f64,
    pub psnr_1d: f64,
    pub psnr_2d: f64,
}

/// Greedy-path tree over the per-pixel patches of `image` (scaled to
/// [0, 1]), starting from pixel `start` (column-stacked index).
pub fn image_plan(
    image: &Image,
    fs: &WaveletFilterSet,
    patch_side: usize,
    start: usize,
    search: SearchStrategy,
) -> Result<TreePlan> {
    let cfg = PatchConfig::new(patch_side, PatchMode::PerPixel)?;
    let features = extract_patches(&image.normalized(), &cfg)?;
    let tree_cfg = TreeConfig { search, ..TreeConfig::default() };
    build_generalized_tree(&features, fs, &SquaredEuclidean, PathPolicy::Greedy { start }, &tree_cfg)
}

/// PSNR of the three m-term approximations for every `m` in `ms`, using a
/// tree built by [`image_plan`]. Lossless results are `f64::INFINITY`.
pub fn approx_sweep(image: &Image, fs: &WaveletFilterSet, plan: &TreePlan, ms: &[usize]) -> Result<Vec<SweepRow>> {
    if ms.contains(&0) {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let (w, h) = (image.width(), image.height());
    let signal = image.column_stacked();
    let adaptive = decompose(&signal, plan, fs)?;
    let plain_plan = TreePlan::identity(signal.len(), fs, &TreeConfig::default())?;
    let plain = decompose(&signal, &plain_plan, fs)?;
    let sep = decompose_2d(image.pixels(), w, h, fs)?;

    ms.iter()
        .map(|&m| {
            let mut c = adaptive.clone();
            c.keep_largest(m);
            let g = Image::from_column_stacked(w, h, &reconstruct(&c, plan, fs)?)?;
            let mut c = plain.clone();
            c.keep_largest(m);
            let one = Image::from_column_stacked(w, h, &reconstruct(&c, &plain_plan, fs)?)?;
            let mut c = sep.clone();
            c.keep_largest(m);
            let two = Image::new(w, h, reconstruct_2d(&c, fs)?)?;
            Ok(SweepRow {
                m,
                psnr_gtbwt: sweep_psnr(image, &g)?,
                psnr_1d: sweep_psnr(image, &one)?,
                psnr_2d: sweep_psnr(image, &two)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::filter_set;
    use crate::imaging::rotated_square;

    #[test]
    fn constant_image_is_lossless_everywhere() {
        let img = Image::filled(32, 32, 90.0).unwrap();
        let fs = filter_set("db1").unwrap();
        let plan = image_plan(&img, &fs, 3, 0, SearchStrategy::Streaming).unwrap();
        for row in approx_sweep(&img, &fs, &plan, &[1, 5]).unwrap() {
            assert_eq!(row.psnr_gtbwt, f64::INFINITY);
            assert_eq!(row.psnr_1d, f64::INFINITY);
            assert_eq!(row.psnr_2d, f64::INFINITY);
        }
    }

    #[test]
    fn full_count_is_lossless_and_adaptive_wins_on_edges() {
        let img = rotated_square(32, 30.0).unwrap();
        let fs = filter_set("db4").unwrap();
        let plan = image_plan(&img, &fs, 5, 0, SearchStrategy::Streaming).unwrap();
        let rows = approx_sweep(&img, &fs, &plan, &[40, 1 << 20]).unwrap();
        let full = rows[1];
        assert_eq!((full.psnr_gtbwt, full.psnr_1d, full.psnr_2d), (f64::INFINITY, f64::INFINITY, f64::INFINITY));
        let mid = rows[0];
        assert!(mid.psnr_gtbwt > mid.psnr_1d && mid.psnr_gtbwt > mid.psnr_2d, "{mid:?}");
        assert!(approx_sweep(&img, &fs, &plan, &[0]).is_err());
    }
}
