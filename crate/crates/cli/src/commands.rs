use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use gtbwt::denoise::{denoise_cycle_spin, denoise_iterative, denoise_subimage_avg};
use gtbwt::imaging::{add_awgn, extract_patches, rotated_square};
use gtbwt::sweep::{approx_sweep, image_plan};
use gtbwt::transform::{basis_element, decompose};
use gtbwt::tree::build_generalized_tree;
use gtbwt::{
    filter_set, stream_rng, Band, CoeffIndex, Coefficients, DenoiseParams, FeatureMatrix, Image, PatchConfig,
    PatchMode, PathPolicy, SearchStrategy, SquaredEuclidean, TreeConfig, TreePlan,
};
use rand::Rng;

use crate::{ApproxArgs, BasisArgs, Cli, Command, DenoiseArgs, ImageSource, PlanBuildArgs, PlanCommand};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Approx(a) => cmd_approx(cli, a),
        Command::Denoise(a) => cmd_denoise(cli, a),
        Command::Basis(a) => cmd_basis(cli, a),
        Command::Plan(PlanCommand::Build(a)) => cmd_plan_build(cli, a),
        Command::Plan(PlanCommand::Inspect { plan }) => {
            let plan = TreePlan::load(plan).with_context(|| format!("loading plan {}", plan.display()))?;
            print_plan(&plan, None);
            Ok(())
        }
    }
}

fn load_image(path: &Path) -> Result<Image> {
    Image::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_source(src: &ImageSource) -> Result<Image> {
    let img = match (&src.input, src.synthetic) {
        (Some(path), _) => load_image(path)?,
        (None, Some(size)) => rotated_square(size, src.angle)?,
        (None, None) => bail!("give an image with --input or --synthetic"),
    };
    Ok(match src.crop {
        Some([x, y, w, h]) => img.crop(x, y, w, h)?,
        None => img,
    })
}

fn greedy_start(cli: &Cli, start: Option<usize>, n: usize) -> Result<usize> {
    match start {
        Some(s) if s >= n => bail!("start pixel {s} is outside an image of {n} pixels"),
        Some(s) => Ok(s),
        None => Ok(stream_rng(cli.seed, 0).random_range(0..n)),
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn save(img: &Image, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

fn cmd_approx(cli: &Cli, a: &ApproxArgs) -> Result<()> {
    let img = load_source(&a.source)?;
    ensure!(!a.ms.is_empty(), "no m values given");
    let start = greedy_start(cli, a.start, img.len())?;
    let out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["filter", "m", "psnr_gtbwt", "psnr_1d", "psnr_2d"])?;
    for name in &a.filters {
        let fs = filter_set(name)?;
        let plan = image_plan(&img, &fs, a.patch_side, start, SearchStrategy::default())?;
        for r in approx_sweep(&img, &fs, &plan, &a.ms)? {
            w.write_record([
                name.clone(),
                r.m.to_string(),
                format!("{:.6}", r.psnr_gtbwt),
                format!("{:.6}", r.psnr_1d),
                format!("{:.6}", r.psnr_2d),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_denoise(cli: &Cli, a: &DenoiseArgs) -> Result<()> {
    let input = load_source(&a.source)?;
    let mut reference = a.reference.as_deref().map(load_image).transpose()?;
    let noisy = if a.add_noise {
        let noisy = add_awgn(&input, a.sigma, a.noise_seed.unwrap_or(cli.seed.wrapping_add(1)))?;
        if let Some(p) = &a.noisy_output {
            save(&noisy, p)?;
        }
        reference.get_or_insert(input);
        noisy
    } else {
        input
    };
    let p = DenoiseParams {
        threshold: a.threshold.unwrap_or(3.0 * a.sigma),
        filter: a.filter.clone(),
        patch_side: a.patch_side,
        num_trees: a.trees,
        epsilon: a.epsilon,
        seed: cli.seed,
        iterations: a.iterations as usize,
        oracle_patch_source: a.oracle.as_deref().map(load_image).transpose()?,
        reference,
        ..DenoiseParams::new(a.sigma)
    };
    p.validate()?;
    ensure!(a.sa || a.iterations == 1, "a second iteration needs --sa");
    let (out, report) = if !a.sa {
        denoise_cycle_spin(&noisy, &p)?
    } else if a.iterations == 2 || p.oracle_patch_source.is_some() {
        denoise_iterative(&noisy, &p)?
    } else {
        denoise_subimage_avg(&noisy, &p)?
    };
    save(&out, &a.output)?;
    let csv = report.to_csv(!cli.no_timing);
    match &a.report {
        Some(path) => create(path)?.write_all(csv.as_bytes())?,
        None => eprint!("{csv}"),
    }
    Ok(())
}

/// Smooth ramp with a jump, used as the 1D basis test signal.
fn test_signal(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = j as f64 / n as f64;
            100.0 * t + if t >= 0.5 { 60.0 } else { 0.0 }
        })
        .collect()
}

fn cmd_basis(cli: &Cli, a: &BasisArgs) -> Result<()> {
    let fs = filter_set(&a.filter)?;
    let (signal, shape) = match a.signal_length {
        Some(n) => (test_signal(n), (n, 1, false)),
        None => {
            let img = load_source(&a.source)?;
            (img.column_stacked(), (img.width(), img.height(), true))
        }
    };
    let plan = match &a.plan {
        Some(path) => {
            let plan = TreePlan::load(path).with_context(|| format!("loading plan {}", path.display()))?;
            ensure!(plan.filter_name() == fs.name(), "plan uses {}, not {}", plan.filter_name(), fs.name());
            plan
        }
        None if shape.2 => {
            let img = Image::from_column_stacked(shape.0, shape.1, &signal)?;
            image_plan(&img, &fs, a.patch_side, greedy_start(cli, None, img.len())?, SearchStrategy::default())?
        }
        None => build_generalized_tree(
            &FeatureMatrix::from_scalars(&signal)?,
            &fs,
            &SquaredEuclidean,
            PathPolicy::Greedy { start: 0 },
            &TreeConfig::default(),
        )?,
    };
    ensure!(
        plan.leaf_count() == signal.len(),
        "plan has {} leaves but the input has {} samples",
        plan.leaf_count(),
        signal.len()
    );

    let mut chosen: Vec<CoeffIndex> = a.elements.clone();
    if a.all {
        chosen.extend(Coefficients::zeros(&plan).indices());
    }
    if let Some(k) = a.largest {
        let c = decompose(&signal, &plan, &fs)?;
        let (first, last) = a.levels.unwrap_or((1, plan.depth()));
        ensure!(last <= plan.depth(), "level {last} is beyond the plan depth {}", plan.depth());
        for level in first..=last {
            let band = c.band(Band::Detail(level)).expect("level within depth");
            let mut pos: Vec<usize> = (0..band.len()).collect();
            pos.sort_by(|&i, &j| band[j].abs().total_cmp(&band[i].abs()).then(i.cmp(&j)));
            chosen.extend(pos.into_iter().take(k).map(|position| CoeffIndex { band: Band::Detail(level), position }));
        }
    }
    ensure!(!chosen.is_empty(), "no elements selected; use --element, --largest or --all");

    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut values = a.values.as_deref().map(create).transpose()?.map(csv::Writer::from_writer);
    if let Some(w) = &mut values {
        w.write_record(["band", "position", "index", "value"])?;
    }
    for idx in chosen {
        let e = basis_element(&plan, &fs, idx).with_context(|| format!("element {}:{}", idx.band, idx.position))?;
        let img = if shape.2 {
            Image::from_column_stacked(shape.0, shape.1, &e)?
        } else {
            Image::new(shape.0, 1, e.clone())?
        };
        let path = a.out_dir.join(format!("basis_{}_{}.png", idx.band, idx.position));
        save(&img.contrast_normalized(), &path)?;
        println!("{}", path.display());
        if let Some(w) = &mut values {
            for (j, v) in e.iter().enumerate() {
                w.write_record([idx.band.to_string(), idx.position.to_string(), j.to_string(), format!("{v:.17e}")])?;
            }
        }
    }
    if let Some(w) = &mut values {
        w.flush()?;
    }
    Ok(())
}

fn cmd_plan_build(cli: &Cli, a: &PlanBuildArgs) -> Result<()> {
    let img = load_source(&a.source)?;
    let fs = filter_set(&a.filter)?;
    let features = extract_patches(&img.normalized(), &PatchConfig::new(a.patch_side, PatchMode::PerPixel)?)?;
    let cfg = TreeConfig { keep_points: true, ..TreeConfig::default() };
    let mut rng = stream_rng(cli.seed, 0);
    let policy = match a.epsilon {
        Some(epsilon) => PathPolicy::Randomized { epsilon, rng: &mut rng },
        None => PathPolicy::Greedy { start: greedy_start(cli, a.start, img.len())? },
    };
    let plan = build_generalized_tree(&features, &fs, &SquaredEuclidean, policy, &cfg)?;
    let smoothness = plan.smoothness(&SquaredEuclidean).transpose()?;
    print_plan(&plan, smoothness.as_deref());
    if let Some(path) = &a.output {
        plan.save(path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn print_plan(plan: &TreePlan, smoothness: Option<&[f64]>) {
    println!("filter {}", plan.filter_name());
    println!("leaves {}", plan.leaf_count());
    println!("depth {}", plan.depth());
    println!("level,length,detail_band,smoothness");
    for (i, len) in plan.level_lengths().iter().take(plan.depth()).enumerate() {
        let s = smoothness.map(|s| format!("{:.6}", s[i])).unwrap_or_default();
        println!("{},{len},d{},{s}", i + 1, plan.depth() - i);
    }
    println!("approximation,{},a1,", plan.coarsest_len());
}
