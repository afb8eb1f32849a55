use std::path::Path;
use std::process::Command;

use nngibbs_core::diagnostics::TraceTable;
use nngibbs_core::harness::ExperimentConfig;

fn nngibbs(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_nngibbs")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const INFORMED: &str = r#"
name = "informed"
seed = 1
sweeps = 10000
spacing = 10
record_outputs = 0
init = ["informed"]

[network]
kind = "mlp"
widths = [20, 5, 1]
activation = "relu"
output = { kind = "gaussian_regression" }

[noise]
delta = 0.01

[prior]
kind = "fan_in"

[data]
source = "synthetic"
n_test = 100

[sampler]
kind = "gibbs"
"#;

fn batch_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|k| x[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[test]
fn informed_gibbs_run_is_stationary_from_the_start() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), INFORMED);
    let out = dir.path().join("run");
    nngibbs(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    let table = TraceTable::load(&out.join("chain_00_informed.csv")).unwrap();
    assert_eq!(table.records.len(), 1001);
    for name in ["sq_norm_w1", "residual_1", "score_u"] {
        let v = table.series(name).unwrap().coordinate(0);
        let h = v.len() / 2;
        let (a, b) = (&v[1..=h], &v[h + 1..]);
        let se = (batch_se(a, 20).powi(2) + batch_se(b, 20).powi(2)).sqrt();
        let z = (mean(a) - mean(b)).abs() / se;
        assert!(z < 3.0, "{name}: halves differ by {z:.2} standard errors");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["chains"][0]["steps_completed"], 10000);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &INFORMED.replace("init = [\"informed\"]", "init = [\"informed\", \"zero\"]"),
    );
    let out = dir.path().join("run");
    nngibbs(&[
        "run",
        "--config",
        &config,
        "--seed",
        "9",
        "--sweeps",
        "40",
        "--max-seconds",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stored = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!((stored.seed, stored.sweeps, stored.max_seconds), (9, 40, Some(100.0)));

    let report = nngibbs(&["diagnose", "--out", out.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["merge_observable"], "test_mse");
    assert_eq!(v["merges"][0]["init"], "zero");
    assert!(out.join("diagnosis.json").exists());
}

#[test]
fn generate_writes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), INFORMED);
    let out = dir.path().join("data");
    nngibbs(&[
        "generate",
        "--config",
        &config,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let train = std::fs::read_to_string(out.join("train.csv")).unwrap();
    let mut lines = train.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("x_0,") && header.ends_with(",y_0"));
    assert_eq!(lines.count(), 4 * (20 * 5 + 5 + 5 + 1));
    assert_eq!(
        std::fs::read_to_string(out.join("test.csv")).unwrap().lines().count(),
        101
    );
    let layer1 = std::fs::read_to_string(out.join("teacher_layer1.csv")).unwrap();
    assert_eq!(layer1.lines().count(), 5);
    assert_eq!(layer1.lines().next().unwrap().split(',').count(), 21);
}

#[test]
fn presets_list_and_dump() {
    let list = nngibbs(&["presets", "list"]);
    for name in [
        "ts-criterion",
        "mnist-mlp12-gibbs",
        "mnist-cnn-hmc",
        "delta-sweep-gibbs",
    ] {
        assert!(list.contains(name), "missing {name}");
    }
    let text = nngibbs(&["presets", "dump", "ts-criterion"]);
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.name, "ts-criterion");

    let dir = tempfile::tempdir().unwrap();
    nngibbs(&[
        "presets",
        "dump",
        "delta-sweep-mala-zero",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert!(files > 1);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_nngibbs"))
        .args(["run", "--preset", "no-such-preset", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-preset"));
}
