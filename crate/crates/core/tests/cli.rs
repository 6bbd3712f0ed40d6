//! Black-box tests of the command-line binary: exit codes, artifact
//! layout, and run-to-run determinism.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_BIN_EXE_emitter-sim"));
    assert!(p.exists(), "binary missing at {}", p.display());
    p = p.canonicalize().unwrap();
    p
}

#[test]
fn preset_run_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin())
        .args(["blueprint", "--preset", "fig3_blueprint", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("blueprint.csv").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn seed_override_is_deterministic() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let status = Command::new(bin())
            .args(["g2", "--preset", "fig4b_g2", "--seed", "77", "--out"])
            .arg(d.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(d1.path().join("clicks.csv")).unwrap();
    let b = std::fs::read(d2.path().join("clicks.csv")).unwrap();
    assert_eq!(a, b);

    // a different seed changes the stream
    let d3 = tempfile::tempdir().unwrap();
    let status = Command::new(bin())
        .args(["g2", "--preset", "fig4b_g2", "--seed", "78", "--out"])
        .arg(d3.path())
        .status()
        .unwrap();
    assert!(status.success());
    let c = std::fs::read(d3.path().join("clicks.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"rabi\"\nbogus = 1\n").unwrap();
    let out = Command::new(bin())
        .args(["rabi", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_section_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("thin.toml");
    std::fs::write(&cfg, "experiment = \"rabi\"\n").unwrap();
    let out = Command::new(bin())
        .args(["rabi", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wrong_subcommand_for_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args(["echo", "--preset", "fig4d_ramsey", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonconvergent_fit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let mut text = String::from("x,y\n");
    for i in 0..40 {
        text.push_str(&format!("{},1.0\n", i as f64));
    }
    std::fs::write(&data, text).unwrap();
    // negative starting lifetimes overflow the model to infinity, so no
    // step is ever accepted and the fit cannot converge
    let cfg = dir.path().join("fit.toml");
    std::fs::write(
        &cfg,
        format!(
            "experiment = \"fit\"\n[fit]\nmodel = \"biexp\"\ninitial = [1.0, -0.001, 1.0, -0.002]\ndata = \"{}\"\n",
            data.display()
        ),
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["fit", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn presets_listing() {
    let out = Command::new(bin()).arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig3_blueprint", "fig4e_echo", "fig5c_ple"] {
        assert!(text.contains(name), "missing {name}");
    }
}
