use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walkproj"))
        .args(args)
        .env("WALKPROJ_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

/// Rows of a CSV file after the comments and the header.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn scalar_demo_reports_gains() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["scalar-demo"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((value("Gamma") - 1.43).abs() < 0.01);
    assert!((value("gamma") - 2.37).abs() < 0.01);
    assert!(value("peak dlqr") > value("peak time-projection"));
    assert!(dir.path().join("scalar_demo.csv").is_file());
}

#[test]
fn scalar_demo_rejects_zero_state_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["scalar-demo", "--set", "q=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[config]"));
}

#[test]
fn auto_mu_gains_end_in_leg_retraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gains", "--mu", "auto", "--set", "grid=60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("gains.csv"));
    let last = table.last().unwrap();
    assert!((last[1] - 1.0).abs() < 1e-3 && (last[3] + 1.0).abs() < 1e-3);
}

#[test]
fn outputs_carry_provenance_and_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run(d.path(), &["nominal", "--set", "samples=11"]).status.success());
    }
    let text = fs::read_to_string(a.path().join("nominal.csv")).unwrap();
    assert!(text.starts_with("# walkproj "));
    assert!(text.contains("# command = nominal") && text.contains("# samples = 11"));
    assert_eq!(text, fs::read_to_string(b.path().join("nominal.csv")).unwrap());
}

#[test]
fn undisturbed_simulation_stays_on_the_gait() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--set", "push_force_x=0", "--set", "steps=4"]);
    assert!(out.status.success());
    for c in ["open-loop", "dlqr", "time-projection", "capture-point"] {
        let table = rows(&dir.path().join(format!("touchdown_{c}.csv")));
        assert_eq!(table.len(), 4);
        assert!(table.iter().all(|r| r[1] <= 1e-8), "{c}");
    }
}

#[test]
fn fall_exits_with_code_four_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--set", "controller=open-loop"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(dir.path().join("trajectory_open-loop.csv").is_file());
}

#[test]
fn viability_grid_is_nested() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["viability", "--set", "resolution=8"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("nesting violations 0"));
    let labels = rows(&dir.path().join("viability.csv"));
    assert_eq!(labels.len(), 64);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# gait\nspeed = 0.5\nsamples = 5\n").unwrap();
    let out_dir = dir.path().join("flagged");
    let out = Command::new(env!("CARGO_BIN_EXE_walkproj"))
        .args(["nominal", "--config", cfg.to_str().unwrap(), "--set", "samples=3"])
        .arg("--out-dir")
        .arg(&out_dir)
        .env("WALKPROJ_OUT_DIR", dir.path().join("ignored"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(out_dir.join("nominal.csv")).unwrap();
    assert!(text.contains("# speed = 0.5") && text.contains("# samples = 3"));
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn bad_config_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["gains", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
    for args in [
        &["gains", "--set", "bogus=1"][..],
        &["gains", "--mu", "lots"],
        &["simulate", "--set", "controller=pid"],
        &["viability", "--set", "epsilon=-1"],
        &["nominal", "--set", "leg_mass_fraction=0.7"],
    ] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}
