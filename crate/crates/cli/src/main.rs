//! `gtbwt`: approximation sweeps, denoising, basis-element export and plan
//! inspection from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gtbwt::{Band, CoeffIndex};

#[derive(Debug, Parser)]
#[command(name = "gtbwt", version, about = "Generalized tree-based wavelet transform tools")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GTBWT_THREADS")]
    pub threads: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Leave timing out of reports so identical runs give identical files.
    #[arg(long, global = true)]
    pub no_timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// m-term approximation PSNR of the adaptive, 1D and 2D transforms.
    Approx(ApproxArgs),
    /// Denoise an image by thresholding over randomized trees.
    Denoise(DenoiseArgs),
    /// Export basis elements as contrast-normalized images.
    Basis(BasisArgs),
    /// Build or inspect a tree plan.
    #[command(subcommand)]
    Plan(PlanCommand),
}

/// Where an input image comes from.
#[derive(Debug, Clone, Args)]
pub struct ImageSource {
    /// 8-bit grayscale PGM or PNG.
    #[arg(long, short, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,

    /// Use a generated rotated square of this size instead of a file.
    #[arg(long, value_name = "SIZE")]
    pub synthetic: Option<usize>,

    /// Rotation of the synthetic square in degrees.
    #[arg(long, default_value_t = 30.0, requires = "synthetic")]
    pub angle: f64,

    /// Crop before use: X,Y,WIDTH,HEIGHT.
    #[arg(long, value_parser = parse_crop)]
    pub crop: Option<[usize; 4]>,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub source: ImageSource,

    /// Wavelet filters, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "db1,db4,db8")]
    pub filters: Vec<String>,

    /// Coefficient counts, comma separated.
    #[arg(long = "m", value_delimiter = ',', default_value = "500,1000,2000,4000,8000")]
    pub ms: Vec<usize>,

    /// Patch side for the tree features (odd).
    #[arg(long, default_value_t = 9)]
    pub patch_side: usize,

    /// Starting pixel of the greedy path, as a column-stacked index
    /// (default: drawn from the seed).
    #[arg(long)]
    pub start: Option<usize>,

    /// CSV output (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub source: ImageSource,

    /// Denoised image (PGM or PNG by extension).
    #[arg(long, short)]
    pub output: PathBuf,

    /// Report CSV: stage, psnr_db, mean_nonzeros, seconds.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Noise standard deviation on the 0-255 scale.
    #[arg(long)]
    pub sigma: f64,

    /// Hard threshold on the 0-255 scale (default: 3 sigma).
    #[arg(long)]
    pub threshold: Option<f64>,

    #[arg(long, default_value = "sym8")]
    pub filter: String,

    /// Patch side (odd).
    #[arg(long, default_value_t = 9)]
    pub patch_side: usize,

    #[arg(long, default_value_t = 10)]
    pub trees: usize,

    /// Path randomness.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,

    /// Average over all subimages of the patch footprint.
    #[arg(long)]
    pub sa: bool,

    /// Rebuild the trees from the first result and denoise again (needs --sa).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub iterations: u32,

    /// Clean image whose patches define the trees.
    #[arg(long)]
    pub oracle: Option<PathBuf>,

    /// Clean image used to report PSNR.
    #[arg(long)]
    pub reference: Option<PathBuf>,

    /// Treat the input as clean: add Gaussian noise of the given sigma
    /// first and report PSNR against the input.
    #[arg(long)]
    pub add_noise: bool,

    /// Seed of the added noise (default: seed + 1).
    #[arg(long, requires = "add_noise")]
    pub noise_seed: Option<u64>,

    /// Also save the noisy image.
    #[arg(long, requires = "add_noise")]
    pub noisy_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[command(flatten)]
    pub source: ImageSource,

    /// Use a 1D test signal of this length instead of an image.
    #[arg(long, value_name = "N", conflicts_with_all = ["input", "synthetic"])]
    pub signal_length: Option<usize>,

    #[arg(long, default_value = "sym8")]
    pub filter: String,

    /// Patch side for image features (odd).
    #[arg(long, default_value_t = 9)]
    pub patch_side: usize,

    /// Use a saved plan instead of building one.
    #[arg(long)]
    pub plan: Option<PathBuf>,

    /// Element address BAND:POSITION, where BAND is `a1` (approximation)
    /// or `dL` (detail level L, 1 = coarsest). Repeatable.
    #[arg(long = "element", value_parser = parse_address)]
    pub elements: Vec<CoeffIndex>,

    /// Export the K elements with the largest coefficients of each detail level.
    #[arg(long, value_name = "K")]
    pub largest: Option<usize>,

    /// Detail levels considered by --largest: FIRST-LAST (default: all).
    #[arg(long, value_parser = parse_range)]
    pub levels: Option<(usize, usize)>,

    /// Export every element.
    #[arg(long)]
    pub all: bool,

    /// Directory for the element images.
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Also write the raw element values as CSV: band, position, index, value.
    #[arg(long)]
    pub values: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Build a plan from an image's patches and print its levels.
    Build(PlanBuildArgs),
    /// Load a saved plan and print its levels.
    Inspect {
        /// Plan file.
        plan: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PlanBuildArgs {
    #[command(flatten)]
    pub source: ImageSource,

    #[arg(long, default_value = "sym8")]
    pub filter: String,

    /// Patch side (odd).
    #[arg(long, default_value_t = 9)]
    pub patch_side: usize,

    /// Randomized paths with this epsilon instead of the greedy path.
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Greedy starting pixel (default: drawn from the seed).
    #[arg(long, conflicts_with = "epsilon")]
    pub start: Option<usize>,

    /// Save the plan here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_crop(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>()?;
    <[usize; 4]>::try_from(parts).map_err(|_| "expected X,Y,WIDTH,HEIGHT".to_string())
}

fn parse_address(s: &str) -> Result<CoeffIndex, String> {
    let (b, p) = s.split_once(':').ok_or("expected BAND:POSITION")?;
    let band = match b {
        "a1" => Band::Approx,
        _ => match b.strip_prefix('d').map(str::parse::<usize>) {
            Some(Ok(level)) if level > 0 => Band::Detail(level),
            _ => return Err(format!("band `{b}` is neither a1 nor d<level>")),
        },
    };
    Ok(CoeffIndex { band, position: p.parse().map_err(|e| format!("position: {e}"))? })
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: usize = b.parse().map_err(|e| format!("`{b}`: {e}"))?;
    if a == 0 || b < a {
        return Err("expected FIRST-LAST with 1 <= FIRST <= LAST".into());
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
