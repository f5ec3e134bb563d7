//! Patch-tree denoising: hard thresholding of the adaptive transform,
//! averaged over randomized trees, optionally over all subimages of the
//! patch footprint and over a second pass.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{filter_set, WaveletFilterSet};
use crate::imaging::{extract_patches, psnr, Image, PatchConfig, PatchMode};
use crate::ordering::{SearchStrategy, SquaredEuclidean};
use crate::transform::{decompose, reconstruct, Coefficients};
use crate::tree::{build_generalized_tree, PathPolicy, TreeConfig, TreePlan};

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseParams {
    /// Noise standard deviation on the 0-255 scale.
    pub sigma: f64,
    /// Hard threshold on the 0-255 scale.
    pub threshold: f64,
    pub filter: String,
    pub patch_side: usize,
    pub num_trees: usize,
    /// Path randomness, applied to patches scaled to [0, 1].
    pub epsilon: f64,
    pub seed: u64,
    /// 1 or 2.
    pub iterations: usize,
    /// Clean image whose patches define the trees instead of the noisy ones.
    pub oracle_patch_source: Option<Image>,
    /// Clean image used only to report PSNR.
    pub reference: Option<Image>,
    pub search: SearchStrategy,
}

impl DenoiseParams {
    /// Defaults: threshold 3 sigma, sym8, 9x9 patches, 10 trees,
    /// epsilon 0.1, seed 0, one iteration.
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            threshold: 3.0 * sigma,
            filter: "sym8".into(),
            patch_side: 9,
            num_trees: 10,
            epsilon: 0.1,
            seed: 0,
            iterations: 1,
            oracle_patch_source: None,
            reference: None,
            search: SearchStrategy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if self.patch_side == 0 || self.patch_side % 2 == 0 {
            return bad(format!("patch side must be odd, got {}", self.patch_side));
        }
        if self.num_trees == 0 {
            return bad("at least one tree is required".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(1..=2).contains(&self.iterations) {
            return bad(format!("iterations must be 1 or 2, got {}", self.iterations));
        }
        filter_set(&self.filter)?;
        Ok(())
    }
}

/// Zeroes every detail coefficient with `|c| < t`; the approximation band
/// is left alone.
pub fn hard_threshold(c: &Coefficients, t: f64) -> Coefficients {
    let mut out = c.clone();
    hard_threshold_in_place(&mut out, t);
    out
}

pub fn hard_threshold_in_place(c: &mut Coefficients, t: f64) {
    for v in c.details_mut().iter_mut().flatten() {
        if v.abs() < t {
            *v = 0.0;
        }
    }
}

/// Threshold one signal against a plan. Returns the cleaned signal and the
/// number of surviving coefficients (approximation included).
fn shrink(signal: &[f64], plan: &TreePlan, fs: &WaveletFilterSet, t: f64) -> Result<(Vec<f64>, usize)> {
    let mut c = decompose(signal, plan, fs)?;
    hard_threshold_in_place(&mut c, t);
    let nz = c.nonzeros();
    Ok((reconstruct(&c, plan, fs)?, nz))
}

fn build_plan(
    source: &Image,
    cfg: &PatchConfig,
    fs: &WaveletFilterSet,
    p: &DenoiseParams,
    rng: &mut dyn RngCore,
) -> Result<TreePlan> {
    let features = extract_patches(&source.normalized(), cfg)?;
    let tree_cfg = TreeConfig { search: p.search, ..TreeConfig::default() };
    build_generalized_tree(
        &features,
        fs,
        &SquaredEuclidean,
        PathPolicy::Randomized { epsilon: p.epsilon, rng },
        &tree_cfg,
    )
}

/// One tree per cycle-spin instance, built from a patch source image.
/// Trees depend only on the source, so one ensemble can be applied at many
/// thresholds. Signals too short for one filtering level have only the
/// (unthresholded) approximation band, so such an ensemble holds no trees
/// and passes images through unchanged.
#[derive(Debug, Clone)]
pub struct TreeEnsemble {
    width: usize,
    height: usize,
    side: usize,
    subimage_avg: bool,
    fs: WaveletFilterSet,
    plans: Vec<TreePlan>,
}

impl TreeEnsemble {
    /// Builds `p.num_trees` trees from the patches of `source`; tree `t`
    /// draws from [`crate::stream_rng`]`(p.seed, t)`.
    pub fn build(source: &Image, p: &DenoiseParams, subimage_avg: bool) -> Result<Self> {
        p.validate()?;
        let fs = filter_set(&p.filter)?;
        let mode = if subimage_avg { PatchMode::InteriorOnly } else { PatchMode::PerPixel };
        let cfg = PatchConfig::new(p.patch_side, mode)?;
        if subimage_avg && (source.width() < p.patch_side || source.height() < p.patch_side) {
            return Err(Error::Shape(format!(
                "{}x{} image is smaller than the {} patch",
                source.width(),
                source.height(),
                p.patch_side
            )));
        }
        let leaves = if subimage_avg {
            (source.width() - p.patch_side + 1) * (source.height() - p.patch_side + 1)
        } else {
            source.len()
        };
        let trees = if leaves < fs.len().max(2) { 0 } else { p.num_trees };
        let plans = (0..trees)
            .into_par_iter()
            .map(|t| build_plan(source, &cfg, &fs, p, &mut crate::stream_rng(p.seed, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { width: source.width(), height: source.height(), side: p.patch_side, subimage_avg, fs, plans })
    }

    pub fn plans(&self) -> &[TreePlan] {
        &self.plans
    }

    /// Denoises `noisy` with every tree and averages the results. The
    /// second value is the mean number of surviving coefficients per
    /// denoised signal.
    pub fn apply(&self, noisy: &Image, threshold: f64) -> Result<(Image, f64)> {
        if noisy.width() != self.width || noisy.height() != self.height {
            return Err(Error::Shape(format!(
                "ensemble was built for {}x{}, image is {}x{}",
                self.width,
                self.height,
                noisy.width(),
                noisy.height()
            )));
        }
        if self.plans.is_empty() {
            let nz = if self.subimage_avg {
                let s = self.side;
                let (sw, sh) = (self.width - s + 1, self.height - s + 1);
                let total: usize = (0..s * s)
                    .map(|r| {
                        let (dx, dy) = (r / s, r % s);
                        (0..sw)
                            .flat_map(|x| (0..sh).map(move |y| (x + dx, y + dy)))
                            .filter(|&(x, y)| noisy.get(x, y) != 0.0)
                            .count()
                    })
                    .sum();
                total as f64 / (s * s) as f64
            } else {
                noisy.pixels().iter().filter(|&&v| v != 0.0).count() as f64
            };
            return Ok((noisy.clone(), nz));
        }
        let per_tree = self
            .plans
            .par_iter()
            .map(|plan| {
                if self.subimage_avg {
                    self.apply_subimages(noisy, plan, threshold)
                } else {
                    let (clean, nz) = shrink(&noisy.column_stacked(), plan, &self.fs, threshold)?;
                    Ok((clean, nz as f64))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.width * self.height;
        let mut sum = vec![0.0; n];
        let mut nz_sum = 0.0;
        for (img, nz) in &per_tree {
            for (s, v) in sum.iter_mut().zip(img) {
                *s += v;
            }
            nz_sum += nz;
        }
        let k = per_tree.len() as f64;
        for s in &mut sum {
            *s /= k;
        }
        Ok((Image::from_column_stacked(self.width, self.height, &sum)?, nz_sum / k))
    }

    /// Thresholds every subimage (row of the interior patch matrix) and
    /// averages the overlapping pixel estimates with equal weights. Returns
    /// a column-stacked image and the mean nonzero count per subimage.
    fn apply_subimages(&self, noisy: &Image, plan: &TreePlan, t: f64) -> Result<(Vec<f64>, f64)> {
        let s = self.side;
        let (w, h) = (self.width, self.height);
        let (sw, sh) = (w - s + 1, h - s + 1);
        let rows = (0..s * s)
            .into_par_iter()
            .map(|r| {
                let (dx, dy) = (r / s, r % s);
                let sub = noisy.crop(dx, dy, sw, sh)?;
                shrink(&sub.column_stacked(), plan, &self.fs, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = vec![0.0; w * h];
        let mut hits = vec![0u32; w * h];
        let mut nz = 0usize;
        for (r, (clean, count)) in rows.iter().enumerate() {
            let (dx, dy) = (r / s, r % s);
            for x in 0..sw {
                let col = (x + dx) * h + dy;
                for y in 0..sh {
                    acc[col + y] += clean[x * sh + y];
                    hits[col + y] += 1;
                }
            }
            nz += count;
        }
        for (a, &c) in acc.iter_mut().zip(&hits) {
            *a /= f64::from(c);
        }
        Ok((acc, nz as f64 / rows.len() as f64))
    }
}

/// One randomized tree from the noisy image's per-pixel patches, applied to
/// the noisy image itself.
pub fn denoise_single_tree(noisy: &Image, p: &DenoiseParams, rng: &mut dyn RngCore) -> Result<Image> {
    p.validate()?;
    let fs = filter_set(&p.filter)?;
    let source = p.oracle_patch_source.as_ref().unwrap_or(noisy);
    check_source(source, noisy)?;
    if noisy.len() < fs.len().max(2) {
        return Ok(noisy.clone());
    }
    let cfg = PatchConfig::new(p.patch_side, PatchMode::PerPixel)?;
    let plan = build_plan(source, &cfg, &fs, p, rng)?;
    let (clean, _) = shrink(&noisy.column_stacked(), &plan, &fs, p.threshold)?;
    Image::from_column_stacked(noisy.width(), noisy.height(), &clean)
}

fn check_source(source: &Image, noisy: &Image) -> Result<()> {
    if source.width() != noisy.width() || source.height() != noisy.height() {
        return Err(Error::Shape(format!(
            "patch source is {}x{}, noisy image is {}x{}",
            source.width(),
            source.height(),
            noisy.width(),
            noisy.height()
        )));
    }
    Ok(())
}

/// Average of `num_trees` single-tree results.
pub fn denoise_cycle_spin(noisy: &Image, p: &DenoiseParams) -> Result<(Image, DenoiseReport)> {
    run_stage(noisy, p, false, "cycle_spin")
}

/// Cycle spinning where each tree is applied to all subimages of the
/// patch footprint.
pub fn denoise_subimage_avg(noisy: &Image, p: &DenoiseParams) -> Result<(Image, DenoiseReport)> {
    run_stage(noisy, p, true, "subimage_avg")
}

fn run_stage(noisy: &Image, p: &DenoiseParams, sa: bool, name: &str) -> Result<(Image, DenoiseReport)> {
    let source = p.oracle_patch_source.as_ref().unwrap_or(noisy);
    check_source(source, noisy)?;
    let mut report = DenoiseReport::default();
    let out = stage(noisy, source, p, sa, name, &mut report)?;
    Ok((out, report))
}

fn stage(
    noisy: &Image,
    source: &Image,
    p: &DenoiseParams,
    sa: bool,
    name: &str,
    report: &mut DenoiseReport,
) -> Result<Image> {
    let start = Instant::now();
    let ensemble = TreeEnsemble::build(source, p, sa)?;
    let (out, mean_nonzeros) = ensemble.apply(noisy, p.threshold)?;
    report.stages.push(StageReport {
        stage: name.to_string(),
        psnr_db: p.reference.as_ref().map(|r| psnr(r, &out)).transpose()?,
        mean_nonzeros,
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Subimage-averaged denoising, optionally repeated with trees built from
/// the first pass's output (thresholding still applies to `noisy`).
/// With an oracle patch source the first pass builds its trees from it.
pub fn denoise_iterative(noisy: &Image, p: &DenoiseParams) -> Result<(Image, DenoiseReport)> {
    p.validate()?;
    let first_source = p.oracle_patch_source.as_ref().unwrap_or(noisy);
    check_source(first_source, noisy)?;
    let mut report = DenoiseReport::default();
    let first_name = if p.oracle_patch_source.is_some() { "oracle" } else { "iteration_1" };
    let mut out = stage(noisy, first_source, p, true, first_name, &mut report)?;
    if p.iterations == 2 {
        let source = out.clone();
        out = stage(noisy, &source, p, true, "iteration_2", &mut report)?;
    }
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: String,
    /// Present when a reference image was supplied.
    pub psnr_db: Option<f64>,
    pub mean_nonzeros: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseReport {
    pub stages: Vec<StageReport>,
}

impl DenoiseReport {
    pub fn last(&self) -> Option<&StageReport> {
        self.stages.last()
    }

    /// CSV with columns `stage,psnr_db,mean_nonzeros,seconds`. Without
    /// timing the seconds column is left empty, so reports of identical
    /// runs compare byte for byte.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("stage,psnr_db,mean_nonzeros,seconds\n");
        for s in &self.stages {
            let psnr = s.psnr_db.map(|v| format!("{v:.6}")).unwrap_or_default();
            let secs = if include_timing { format!("{:.3}", s.seconds) } else { String::new() };
            writeln!(out, "{},{psnr},{:.4},{secs}", s.stage, s.mean_nonzeros).expect("writing to a String");
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W, include_timing: bool) -> Result<()> {
        w.write_all(self.to_csv(include_timing).as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::add_awgn;
    use crate::tree::TreePlan;

    fn small_scene() -> Image {
        let mut px = Vec::new();
        for y in 0..24 {
            for x in 0..20 {
                px.push(if x + y < 22 { 60.0 } else { 180.0 } + ((x * 7 + y * 3) % 5) as f64);
            }
        }
        Image::new(20, 24, px).unwrap()
    }

    fn params(sigma: f64) -> DenoiseParams {
        DenoiseParams { patch_side: 3, num_trees: 3, filter: "db4".into(), ..DenoiseParams::new(sigma) }
    }

    #[test]
    fn threshold_rule() {
        let fs = filter_set("db1").unwrap();
        let plan = TreePlan::identity(4, &fs, &TreeConfig::default()).unwrap();
        let c = Coefficients::from_parts(&plan, vec![0.5], vec![vec![3.0], vec![-1.0, 2.0]]).unwrap();
        let t = hard_threshold(&c, 2.0);
        assert_eq!(t.values().collect::<Vec<_>>(), vec![0.5, 3.0, 0.0, 2.0]);
        let t = hard_threshold(&c, 100.0);
        assert_eq!(t.values().collect::<Vec<_>>(), vec![0.5, 0.0, 0.0, 0.0]);
        assert_eq!(hard_threshold(&c, 1e-300), c);
        for (a, b) in c.values().zip(hard_threshold(&c, 1.5).values()) {
            assert!(b.abs() <= a.abs());
        }
    }

    #[test]
    fn noiseless_input_survives_tiny_threshold() {
        let img = small_scene();
        let p = DenoiseParams { threshold: 1e-12, ..params(0.0) };
        let out = denoise_single_tree(&img, &p, &mut crate::stream_rng(0, 0)).unwrap();
        let err = img.pixels().iter().zip(out.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
        let (sa, _) = denoise_subimage_avg(&img, &p).unwrap();
        let err = img.pixels().iter().zip(sa.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn constant_image_is_a_fixed_point() {
        let img = Image::filled(16, 16, 77.0).unwrap();
        let (out, report) = denoise_subimage_avg(&img, &params(20.0)).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 77.0).abs() < 1e-9));
        assert!(report.last().unwrap().mean_nonzeros > 0.0);
    }

    #[test]
    fn images_too_small_for_a_level_pass_through() {
        let one = Image::new(1, 1, vec![77.0]).unwrap();
        let p = DenoiseParams { patch_side: 1, ..params(10.0) };
        assert_eq!(denoise_cycle_spin(&one, &p).unwrap().0, one);
        assert_eq!(denoise_subimage_avg(&one, &p).unwrap().0, one);
        assert_eq!(denoise_iterative(&one, &DenoiseParams { iterations: 2, ..p.clone() }).unwrap().0, one);
        let mut rng = crate::stream_rng(0, 0);
        assert_eq!(denoise_single_tree(&one, &p, &mut rng).unwrap(), one);
        // 3x2 is below db4's eight taps
        let tiny = Image::new(3, 2, vec![1.0, 0.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (out, report) =
            denoise_cycle_spin(&tiny, &DenoiseParams { reference: Some(tiny.clone()), ..params(10.0) }).unwrap();
        assert_eq!(out, tiny);
        assert_eq!(report.stages[0].mean_nonzeros, 5.0);
        assert_eq!(report.stages[0].psnr_db, Some(f64::INFINITY));
        assert!(denoise_subimage_avg(&one, &params(10.0)).is_err());
    }

    #[test]
    fn one_tree_cycle_spin_is_single_tree() {
        let noisy = add_awgn(&small_scene(), 15.0, 1).unwrap();
        let p = DenoiseParams { num_trees: 1, seed: 9, ..params(15.0) };
        let single = denoise_single_tree(&noisy, &p, &mut crate::stream_rng(9, 0)).unwrap();
        let (spin, _) = denoise_cycle_spin(&noisy, &p).unwrap();
        assert_eq!(single, spin);
    }

    #[test]
    fn side_one_subimage_average_is_cycle_spin() {
        let noisy = add_awgn(&small_scene(), 15.0, 2).unwrap();
        let p = DenoiseParams { patch_side: 1, ..params(15.0) };
        let (a, ra) = denoise_cycle_spin(&noisy, &p).unwrap();
        let (b, rb) = denoise_subimage_avg(&noisy, &p).unwrap();
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(ra.stages[0].mean_nonzeros, rb.stages[0].mean_nonzeros);
    }

    #[test]
    fn single_iteration_matches_subimage_average() {
        let clean = small_scene();
        let noisy = add_awgn(&clean, 15.0, 3).unwrap();
        let p = DenoiseParams { reference: Some(clean.clone()), ..params(15.0) };
        let (a, ra) = denoise_iterative(&noisy, &p).unwrap();
        let (b, rb) = denoise_subimage_avg(&noisy, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.stages[0].psnr_db, rb.stages[0].psnr_db);
        let p2 = DenoiseParams { iterations: 2, ..p.clone() };
        let (_, r2) = denoise_iterative(&noisy, &p2).unwrap();
        assert_eq!(r2.stages.len(), 2);
        assert_eq!(r2.stages[0].psnr_db, ra.stages[0].psnr_db);
        let bad = DenoiseParams { oracle_patch_source: Some(Image::filled(3, 3, 0.0).unwrap()), ..p };
        assert!(matches!(denoise_iterative(&noisy, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn denoising_helps_and_is_deterministic() {
        let clean = small_scene();
        let noisy = add_awgn(&clean, 20.0, 4).unwrap();
        let p = DenoiseParams { reference: Some(clean.clone()), ..params(20.0) };
        let (a, ra) = denoise_subimage_avg(&noisy, &p).unwrap();
        let (b, rb) = denoise_subimage_avg(&noisy, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.to_csv(false), rb.to_csv(false));
        assert!(ra.stages[0].psnr_db.unwrap() > psnr(&clean, &noisy).unwrap());
        let p_dup = DenoiseParams { seed: 5, num_trees: 1, ..p.clone() };
        let (one, _) = denoise_cycle_spin(&noisy, &p_dup).unwrap();
        let ens = TreeEnsemble::build(&noisy, &p_dup, false).unwrap();
        let dup = TreeEnsemble { plans: vec![ens.plans[0].clone(); 4], ..ens };
        let (avg, _) = dup.apply(&noisy, p.threshold).unwrap();
        assert!((psnr(&clean, &avg).unwrap() - psnr(&clean, &one).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn report_csv_layout() {
        let r = DenoiseReport {
            stages: vec![StageReport { stage: "x".into(), psnr_db: Some(28.5), mean_nonzeros: 342.76, seconds: 1.5 }],
        };
        assert_eq!(r.to_csv(true), "stage,psnr_db,mean_nonzeros,seconds\nx,28.500000,342.7600,1.500\n");
        assert_eq!(r.to_csv(false), "stage,psnr_db,mean_nonzeros,seconds\nx,28.500000,342.7600,\n");
    }

    #[test]
    fn parameter_validation() {
        assert!(DenoiseParams::new(0.0).validate().is_err());
        assert!(DenoiseParams { patch_side: 4, ..DenoiseParams::new(10.0) }.validate().is_err());
        assert!(DenoiseParams { iterations: 3, ..DenoiseParams::new(10.0) }.validate().is_err());
        assert!(DenoiseParams { filter: "db99".into(), ..DenoiseParams::new(10.0) }.validate().is_err());
        assert!(DenoiseParams::new(10.0).validate().is_ok());
    }
}
