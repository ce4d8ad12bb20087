//! End-to-end runs of the `sgl` binary.

use std::path::Path;
use std::process::{Command, Output};

fn sgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bounds_writes_manifested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgl(&["bounds", "--out", path(dir.path()), "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "manifest.json",
        "scaling.csv",
        "bound_single_mode.csv",
        "bound_two_mode.csv",
        "curve.csv",
    ] {
        assert!(dir.path().join(file).is_file(), "missing {file}");
    }
    let manifest = sgl::harness::RunManifest::read(dir.path()).unwrap();
    assert_eq!(manifest.config.seed, 7);
    assert!(manifest
        .artifacts
        .iter()
        .any(|a| a.ends_with("scaling.csv")));
}

#[test]
fn show_config_applies_overrides() {
    let out = sgl(&[
        "show-config",
        "kl-dynamics",
        "train.learning_rate=0.25",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = sgl::harness::ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.train.learning_rate, 0.25);
    assert_eq!(cfg.seed, 3);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(code(&sgl(&["bounds", "no.such.key=1"])), 2);
    assert_eq!(
        code(&sgl(&["bounds", "--config", "/nonexistent/config.toml"])),
        2
    );
    assert_eq!(code(&sgl(&["show-config", "no-such-experiment"])), 2);
}

#[test]
fn divergence_exits_with_three_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgl(&[
        "kl-dynamics",
        "--out",
        path(dir.path()),
        "sweep.runs=1",
        "train.epochs=50",
        "train.learning_rate=1e6",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn plot_reports_a_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, "x,y\n1,2\n2,3\n").unwrap();
    let svg = dir.path().join("p.svg");
    let ok = sgl(&[
        "plot",
        path(&csv),
        "--x",
        "x",
        "--y",
        "y",
        "--out",
        path(&svg),
        "--log-y",
    ]);
    assert_eq!(code(&ok), 0);
    assert!(svg.is_file());
    let bad = sgl(&[
        "plot",
        path(&csv),
        "--x",
        "x",
        "--y",
        "z",
        "--out",
        path(&svg),
    ]);
    assert_eq!(code(&bad), 2);
}
