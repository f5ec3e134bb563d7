use std::path::Path;
use std::process::{Command, Output};

use gtbwt::{Image, TreePlan};

fn gtbwt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtbwt")).args(args).env_remove("GTBWT_THREADS").output().expect("running gtbwt")
}

fn ok(args: &[&str]) -> String {
    let out = gtbwt(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scene(dir: &Path) -> std::path::PathBuf {
    let mut px = Vec::new();
    for y in 0..16 {
        for x in 0..16 {
            px.push(if x + y < 17 { 50.0 } else { 190.0 } + ((x * 5 + y * 3) % 7) as f64);
        }
    }
    let path = dir.join("scene.pgm");
    Image::new(16, 16, px).unwrap().save(&path).unwrap();
    path
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn constant_image_sweep_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.pgm");
    Image::filled(16, 16, 77.0).unwrap().save(&flat).unwrap();
    let out = ok(&["approx", "-i", p(&flat), "--filters", "db1", "--m", "1,3", "--patch-side", "3"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(&r[2..], ["inf", "inf", "inf"]);
    }
}

#[test]
fn adaptive_transform_wins_on_the_synthetic_square() {
    let out = ok(&["approx", "--synthetic", "32", "--filters", "db4", "--m", "40,1048576", "--patch-side", "5"]);
    let rows = csv_rows(&out);
    let mid: Vec<f64> = rows[0][2..].iter().map(|v| v.parse().unwrap()).collect();
    assert!(mid[0] > mid[1] && mid[0] > mid[2], "{mid:?}");
    assert_eq!(&rows[1][2..], ["inf", "inf", "inf"]);
}

#[test]
fn zero_noise_with_tiny_threshold_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = scene(dir.path());
    let output = dir.path().join("out.pgm");
    let args = ["denoise", "-i", p(&input), "-o", p(&output), "--sigma", "0", "--threshold", "1e-9"];
    ok(&[&args[..], &["--trees", "2", "--patch-side", "3", "--filter", "db4"]].concat());
    assert_eq!(Image::load(&output).unwrap(), Image::load(&input).unwrap());
}

#[test]
fn seeded_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = scene(dir.path());
    let run = |tag: &str, threads: &str| {
        let (img, report) = (dir.path().join(format!("{tag}.png")), dir.path().join(format!("{tag}.csv")));
        ok(&[
            "--threads",
            threads,
            "--seed",
            "5",
            "--no-timing",
            "denoise",
            "-i",
            p(&input),
            "-o",
            p(&img),
            "--report",
            p(&report),
            "--sigma",
            "20",
            "--add-noise",
            "--sa",
            "--iterations",
            "2",
            "--trees",
            "3",
            "--patch-side",
            "3",
        ]);
        (std::fs::read(img).unwrap(), std::fs::read_to_string(report).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    let rows = csv_rows(&a.1);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["iteration_1", "iteration_2"]);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().is_ok() && r[3].is_empty()));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.pgm");
    for args in [
        vec!["denoise", "-i", "/nonexistent/in.pgm", "-o", p(&out), "--sigma", "10"],
        vec!["approx", "--synthetic", "16", "--no-such-flag"],
        vec!["approx", "--synthetic", "16", "--filters", "haar9"],
        vec!["plan", "inspect", "/nonexistent/plan.txt"],
    ] {
        let o = gtbwt(&args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty(), "{args:?} printed nothing");
    }
}

#[test]
fn help_lists_the_global_flags() {
    let text = ok(&["--help"]);
    for flag in ["--threads", "--seed", "--no-timing", "approx", "denoise", "basis", "plan"] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
    assert!(ok(&["denoise", "--help"]).contains("--oracle"));
}

#[test]
fn haar_basis_on_four_samples_is_orthonormal() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("values.csv");
    let listed = ok(&[
        "basis",
        "--signal-length",
        "4",
        "--filter",
        "db1",
        "--all",
        "--out-dir",
        p(dir.path()),
        "--values",
        p(&values),
    ]);
    assert_eq!(listed.lines().count(), 4);
    let rows = csv_rows(&std::fs::read_to_string(&values).unwrap());
    let elems: Vec<Vec<f64>> = rows.chunks(4).map(|c| c.iter().map(|r| r[3].parse().unwrap()).collect()).collect();
    assert_eq!(elems.len(), 4);
    for (i, a) in elems.iter().enumerate() {
        for (j, b) in elems.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10, "<{i},{j}> = {dot}");
        }
    }
}

#[test]
fn basis_images_and_bad_addresses() {
    let dir = tempfile::tempdir().unwrap();
    let listed = ok(&[
        "basis",
        "--synthetic",
        "16",
        "--filter",
        "db4",
        "--patch-side",
        "3",
        "--largest",
        "2",
        "--levels",
        "1-2",
        "--out-dir",
        p(dir.path()),
    ]);
    let files: Vec<&str> = listed.lines().collect();
    assert_eq!(files.len(), 4);
    let img = Image::load(files[0]).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
    assert!(img.pixels().contains(&0.0) && img.pixels().contains(&255.0));

    for bad in ["d40:0", "d1:100000"] {
        let o = gtbwt(&["basis", "--synthetic", "16", "--filter", "db4", "--element", bad, "--out-dir", p(dir.path())]);
        assert!(!o.status.success(), "{bad} accepted");
    }
    let o = gtbwt(&["basis", "--synthetic", "16", "--largest", "1", "--levels", "1-40", "--out-dir", p(dir.path())]);
    assert!(!o.status.success());
}

#[test]
fn plan_build_save_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.txt");
    let built = ok(&["plan", "build", "--synthetic", "128", "--patch-side", "1", "--filter", "sym8", "-o", p(&path)]);
    assert!(built.contains("leaves 16384\n") && built.contains("depth 14\n"), "{built}");
    let level1 = built.lines().find(|l| l.starts_with("1,")).unwrap();
    assert!(level1.starts_with("1,16384,d14,") && level1.len() > "1,16384,d14,".len());

    let inspected = ok(&["plan", "inspect", p(&path)]);
    assert!(inspected.contains("depth 14\n") && inspected.contains("\n1,16384,d14,\n"));

    let mut again = Vec::new();
    TreePlan::load(&path).unwrap().write_to(&mut again).unwrap();
    assert_eq!(again, std::fs::read(&path).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("level 16384", "level 16383", 1)).unwrap();
    assert!(!gtbwt(&["plan", "inspect", p(&path)]).status.success());
}
