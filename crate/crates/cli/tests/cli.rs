use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn twolayer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twolayer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small apple-in-triangle run that finishes in a few seconds.
const SMALL: &str = r#"{
  "solver": {
    "frequencies": [2.0],
    "incident_directions": 2,
    "degree": 3,
    "n_obs": 32,
    "n_solve": 32,
    "n_synth": 64,
    "max_iterations": 3
  },
  "truth": {
    "outer": { "preset": "rounded_triangle" },
    "inner": { "preset": "apple" },
    "lambda1": 1e8
  },
  "initial": { "outer_radius": 2.4, "inner_radius": 0.5, "lambda1": 10.0 },
  "seed": 7
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let o = twolayer(&["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage:"), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let o = twolayer(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["synth", "forward", "invert", "check-derivative", "export-plot"] {
        assert!(stdout(&o).contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let out = dir.path().join("out");
    let o = twolayer(&["synth", "--config", s(&cfg), "--out", s(&out), "--set", "truth=null"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truth"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "bad.json", r#"{"solver": {"frequencies": [1.0]}}"#);
    let o = twolayer(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("incident_directions"), "{}", stderr(&o));
}

#[test]
fn synth_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = twolayer(&["synth", "--config", s(&cfg), "--out", s(&out), "--seed", seed, "--set", "solver.delta=0.05"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("dataset.csv")).unwrap()
    };
    let a = run("a", "11");
    let b = run("b", "11");
    let c = run("c", "12");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.contains("# seed=11"));
    assert!(dir.path().join("a/truth_outer.csv").exists());
    assert!(dir.path().join("a/truth_inner.csv").exists());
}

#[test]
fn forward_writes_far_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let out = dir.path().join("out");
    let o = twolayer(&["forward", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("condition"));
    let csv = fs::read_to_string(out.join("farfield.csv")).unwrap();
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 2 * 32);
}

#[test]
fn invert_from_dataset_then_export_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let data_dir = dir.path().join("data");
    let o = twolayer(&["synth", "--config", s(&cfg), "--out", s(&data_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let out = dir.path().join("rec");
    let o = twolayer(&["invert", "--config", s(&cfg), "--out", s(&out), "--threads", "1", "--set", "data=\"data/dataset.csv\""]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("classification"));
    for f in ["trace.json", "outer.csv", "inner.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert!(!trace["iterations"].as_array().unwrap().is_empty());
    assert_eq!(trace["stages"].as_array().unwrap().len(), 1);

    let plots = dir.path().join("plots");
    let o = twolayer(&["export-plot", "--trace", s(&out.join("trace.json")), "--out", s(&plots)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(plots.join("outer.csv").exists());
    assert!(plots.join("iter_000_outer.csv").exists());
}

#[test]
fn invert_rejects_mismatched_frequencies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let o = twolayer(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("data"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = twolayer(&[
        "invert",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("rec")),
        "--set",
        "data=\"data/dataset.csv\"",
        "--set",
        "solver.frequencies=[3.0]",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frequencies"), "{}", stderr(&o));
}

#[test]
fn check_derivative_reports_small_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.json", SMALL);
    let o = twolayer(&["check-derivative", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("max relative column error")).unwrap();
    let value: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(value < 1e-4, "{line}");
}

#[test]
fn apple_triangle_config_reproduces_the_reconstruction() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/apple_triangle.json");
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rec");
    let o = twolayer(&["invert", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("classification: SoundSoft"), "{}", stdout(&o));
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    let stage = &trace["stages"][0];
    assert!(stage["err"].as_f64().unwrap() <= 5e-3, "{stage}");
    assert!(stage["state"]["lambda1"].as_f64().unwrap().abs() >= 100.0, "{stage}");
}
