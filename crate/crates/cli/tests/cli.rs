//! End-to-end tests of the binary: exit codes, report files, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use alphamod::grid::{sample_function, write_field, GridSpec};
use num_complex::Complex64;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alphamod"))
}

/// Fresh per-test scratch directory.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("alphamod-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gaussian_field(grid: &GridSpec, path: &Path) {
    let f = sample_function(grid, |x| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        Complex64::new((-r2 / 2.0).exp(), 0.0)
    })
    .unwrap();
    write_field(&f, path).unwrap();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = scratch("unknown-key");
    let cfg = dir.join("run.cfg");
    write(&cfg, "grid.dim = 1\nspace.banana = 3\n");
    let out = bin().args(["norm", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("space.banana"));
}

#[test]
fn zero_q_exits_2() {
    let dir = scratch("zero-q");
    let cfg = dir.join("run.cfg");
    write(&cfg, "space.q = 0\n");
    let out = bin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn forced_small_radius_fails_coverage_naming_a_node() {
    let dir = scratch("small-radius");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "covering.radius_factor = 0.1\noutput.directory = {}\n",
            dir.display()
        ),
    );
    let out = bin().args(["bapu-check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("margin ball"), "{err}");
    assert!(err.contains("frequency node"), "{err}");
}

#[test]
fn dense_cost_guard_exits_3() {
    let dir = scratch("cost-guard");
    let grid = GridSpec::new(2, 12.0, 512).unwrap();
    let input = dir.join("f.field");
    gaussian_field(&grid, &input);
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "grid.dim = 2\ngrid.half_width = 12\ngrid.samples = 512\n\
             symbol.name = oscillatory\nsymbol.path = general\n\
             output.directory = {}\n",
            dir.display()
        ),
    );
    let out = bin()
        .args(["apply", "--config"])
        .arg(&cfg)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn apply_identity_round_trips() {
    let dir = scratch("apply-identity");
    let grid = GridSpec::new(1, 16.0, 256).unwrap();
    let input = dir.join("f.field");
    gaussian_field(&grid, &input);
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!("symbol.name = identity\noutput.directory = {}\n", dir.display()),
    );
    let out = bin()
        .args(["apply", "--config"])
        .arg(&cfg)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let original = alphamod::grid::read_field(&input).unwrap();
    let applied = alphamod::grid::read_field(&dir.join("applied.field")).unwrap();
    let worst = original
        .values()
        .iter()
        .zip(applied.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-12, "identity apply drifted by {worst}");

    let meta = fs::read_to_string(dir.join("applied.field.meta")).unwrap();
    assert!(meta.contains("symbol = identity"), "{meta}");
    assert!(meta.contains("path = Multiplier"), "{meta}");
}

#[test]
fn bessel_inverse_pair_recovers_the_field() {
    let dir = scratch("bessel-pair");
    let grid = GridSpec::new(1, 16.0, 256).unwrap();
    let input = dir.join("f.field");
    gaussian_field(&grid, &input);

    let lift = dir.join("lift");
    let cfg_up = dir.join("up.cfg");
    write(
        &cfg_up,
        &format!(
            "symbol.name = bessel\nsymbol.order = 2\noutput.directory = {}\n",
            lift.display()
        ),
    );
    let out = bin()
        .args(["apply", "--config"])
        .arg(&cfg_up)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let back = dir.join("back");
    let cfg_down = dir.join("down.cfg");
    write(
        &cfg_down,
        &format!(
            "symbol.name = bessel\nsymbol.order = -2\noutput.directory = {}\n",
            back.display()
        ),
    );
    let out = bin()
        .args(["apply", "--config"])
        .arg(&cfg_down)
        .arg("--input")
        .arg(lift.join("applied.field"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let original = alphamod::grid::read_field(&input).unwrap();
    let recovered = alphamod::grid::read_field(&back.join("applied.field")).unwrap();
    let worst = original
        .values()
        .iter()
        .zip(recovered.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-10, "inverse pair drifted by {worst}");
}

#[test]
fn norm_of_zero_field_prints_zero() {
    let dir = scratch("norm-zero");
    let grid = GridSpec::new(1, 16.0, 256).unwrap();
    let f = alphamod::grid::SampledField::from_values(
        grid.clone(),
        vec![Complex64::default(); grid.len()],
    )
    .unwrap();
    let input = dir.join("zero.field");
    write_field(&f, &input).unwrap();
    let cfg = dir.join("run.cfg");
    write(&cfg, &format!("output.directory = {}\n", dir.display()));
    let out = bin()
        .args(["norm", "--config"])
        .arg(&cfg)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
    assert!(dir.join("band_profile.csv").exists());
}

#[test]
fn norm_is_non_increasing_in_q() {
    let dir = scratch("norm-q");
    let grid = GridSpec::new(1, 16.0, 256).unwrap();
    let input = dir.join("f.field");
    gaussian_field(&grid, &input);
    let mut values = Vec::new();
    for q in ["1", "2"] {
        let cfg = dir.join(format!("q{q}.cfg"));
        write(
            &cfg,
            &format!("space.q = {q}\noutput.directory = {}\n", dir.display()),
        );
        let out = bin()
            .args(["norm", "--config"])
            .arg(&cfg)
            .arg("--input")
            .arg(&input)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let v: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
        values.push(v);
    }
    assert!(
        values[0] >= values[1],
        "q=1 norm {} should dominate q=2 norm {}",
        values[0],
        values[1]
    );
}

#[test]
fn mismatched_grid_exits_2() {
    let dir = scratch("grid-mismatch");
    let grid = GridSpec::new(1, 16.0, 128).unwrap();
    let input = dir.join("f.field");
    gaussian_field(&grid, &input);
    let cfg = dir.join("run.cfg");
    write(&cfg, "grid.samples = 256\n");
    let out = bin()
        .args(["norm", "--config"])
        .arg(&cfg)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("samples"), "{}", stderr(&out));
}

#[test]
fn verify_lifting_at_b_zero_passes_and_reruns_identically() {
    let dir = scratch("verify-lifting");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.join(run);
        let cfg = dir.join(format!("{run}.cfg"));
        write(
            &cfg,
            &format!(
                "experiment.name = lifting\nexperiment.b = 0\noutput.directory = {}\n",
                out_dir.display()
            ),
        );
        let out = bin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        csvs.push(fs::read(out_dir.join("lifting.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "rerun changed the report bytes");
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    for line in text.lines().skip(1) {
        let ratio: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((ratio - 1.0).abs() < 1e-10, "b=0 row drifted: {line}");
    }
}

#[test]
fn verify_boundedness_with_identity_symbol_passes() {
    let dir = scratch("verify-identity");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "experiment.name = boundedness\nexperiment.b = 0\nsymbol.name = identity\n\
             output.directory = {}\n",
            dir.display()
        ),
    );
    let out = bin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("boundedness.csv").exists());
}

#[test]
fn sweep_emits_one_aggregate_row_per_point() {
    let dir = scratch("sweep");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "experiment.name = lifting\nexperiment.sweep.alpha = 0.25,0.5,0.75\n\
             experiment.sweep.b = 0,1\noutput.directory = {}\n",
            dir.display()
        ),
    );
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let aggregate = fs::read_to_string(dir.join("sweep_aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 6, "{aggregate}");
    let long = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 6 * 12, "{long}");

    let rerun = scratch("sweep-rerun");
    let cfg2 = rerun.join("run.cfg");
    write(
        &cfg2,
        &format!(
            "experiment.name = lifting\nexperiment.sweep.alpha = 0.25,0.5,0.75\n\
             experiment.sweep.b = 0,1\noutput.directory = {}\n",
            rerun.display()
        ),
    );
    let out = bin().args(["sweep", "--config"]).arg(&cfg2).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.join("sweep.csv")).unwrap(),
        fs::read(rerun.join("sweep.csv")).unwrap(),
        "sweep rerun changed bytes"
    );
}

#[test]
fn empty_sweep_lists_run_a_single_point() {
    let dir = scratch("sweep-single");
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!("experiment.name = lifting\noutput.directory = {}\n", dir.display()),
    );
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let aggregate = fs::read_to_string(dir.join("sweep_aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 1, "{aggregate}");
}

#[test]
fn oversized_sweep_exits_3() {
    let dir = scratch("sweep-guard");
    let alphas: Vec<String> = (0..30).map(|i| format!("0.{:02}", i + 10)).collect();
    let bs: Vec<String> = (0..20).map(|i| i.to_string()).collect();
    let ss: Vec<String> = (0..20).map(|i| i.to_string()).collect();
    let cfg = dir.join("run.cfg");
    write(
        &cfg,
        &format!(
            "experiment.name = lifting\nexperiment.sweep.alpha = {}\n\
             experiment.sweep.b = {}\nexperiment.sweep.s = {}\noutput.directory = {}\n",
            alphas.join(","),
            bs.join(","),
            ss.join(","),
            dir.display()
        ),
    );
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("sweep"), "{}", stderr(&out));
}

#[test]
fn bapu_check_default_config_passes() {
    let dir = scratch("bapu-check");
    let cfg = dir.join("run.cfg");
    write(&cfg, &format!("output.directory = {}\n", dir.display()));
    let out = bin().args(["bapu-check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in [
        "covering.csv",
        "windows.csv",
        "derivative_bounds.csv",
        "rescaled.csv",
        "decay.csv",
        "norm_condition.csv",
        "bapu_check_summary.txt",
    ] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    let summary = fs::read_to_string(dir.join("bapu_check_summary.txt")).unwrap();
    assert!(summary.contains("partition deviation"), "{summary}");
}
