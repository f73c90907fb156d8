use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ultrastf::metrics::MetricsReport;

fn ustf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultrastf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = r#"
seed = 3
out_dir = "run"

[data.synthetic]
period = 6
length = 600
channels = 2
trend = "phase_dependent"
trend_magnitude = 0.002
noise_std = 0.05

[model]
kind = "ultrastf"
t_in = 24
t_out = 12
period = 6
shapes = 4
blocks = 2

[train]
epochs = 2
"#;

#[test]
fn default_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&ustf(dir.path(), &["analyze", "params", "--out", "o"]));
    assert_eq!(stdout.trim(), "12985");
    let stdout = ok(&ustf(dir.path(), &["analyze", "params", "--out", "o", "--set", "model.kind=sparsetsf"]));
    assert_eq!(stdout.trim(), "73");
    assert!(dir.path().join("o/params.json").exists());
}

#[test]
fn generate_train_evaluate_forecast_analyze() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let cfg = ["--config", "run.toml"];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(&cfg).map(|s| s.to_string()).collect() };
    let call = |extra: &[&str]| {
        let args = with(extra);
        ustf(dir.path(), &args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    ok(&call(&["gen-data"]));
    ok(&call(&["train"]));
    let stdout = ok(&call(&["eval"]));
    assert!(stdout.contains("average"));
    let run = dir.path().join("run");
    for f in ["series.csv", "model.ckpt", "train_report.json", "train_report_epochs.csv", "metrics.csv", "metrics.json", "manifest.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let report = MetricsReport::load_json(&run.join("metrics.json")).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["horizon 3", "horizon 6", "horizon 12", "average"]);

    ok(&call(&["forecast", "--input", "run/series.csv"]));
    let forecast = fs::read_to_string(run.join("forecast.csv")).unwrap();
    assert_eq!(forecast.lines().count(), 1 + 12);

    ok(&call(&["analyze", "sensitivity"]));
    ok(&call(&["analyze", "shapes"]));
    let shapes = fs::read_to_string(run.join("shapes.csv")).unwrap();
    assert_eq!(shapes.lines().count(), 1 + 2 * 4);
    assert!(!run.join(".lock").exists());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    for key in ["gen-data", "train", "eval", "forecast", "analyze-sensitivity", "analyze-shapes"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| ustf(dir.path(), args).status.code();

    assert_eq!(code(&["train", "--config", "missing.toml"]), Some(3));
    fs::write(dir.path().join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(code(&["train", "--config", "bad.toml"]), Some(2));
    assert_eq!(code(&["train", "--set", "model.period=0"]), Some(2));
    assert_eq!(code(&["eval", "--out", "empty"]), Some(3));

    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    assert_eq!(code(&["train", "--config", "run.toml"]), Some(0));
    assert_eq!(code(&["eval", "--config", "run.toml", "--set", "model.t_in=36"]), Some(4));
    assert_eq!(code(&["analyze", "shapes", "--config", "run.toml", "--set", "model.kind=sparsetsf"]), Some(4));

    fs::write(dir.path().join("ragged.csv"), "timestamp,a\n0,1\n900\n").unwrap();
    let out = ustf(dir.path(), &["forecast", "--config", "run.toml", "--input", "ragged.csv"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    fs::write(dir.path().join("run/.lock"), "").unwrap();
    assert_eq!(code(&["eval", "--config", "run.toml"]), Some(3));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    ok(&ustf(dir.path(), &["gen-data", "--config", "run.toml", "--out", "a"]));
    ok(&ustf(dir.path(), &["gen-data", "--config", "run.toml", "--out", "b", "--seed", "4"]));
    ok(&ustf(dir.path(), &["gen-data", "--config", "run.toml", "--out", "c", "--seed", "3"]));
    let read = |d: &str| fs::read(dir.path().join(d).join("series.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
}
