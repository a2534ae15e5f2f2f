use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pamlab_cli::ExperimentConfig;
use serde_json::{json, Value};

fn pamlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pamlab")).args(args).output().expect("binary runs")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Small but complete white-noise experiment.
fn small(out: &Path) -> Value {
    json!({
        "master_seed": 11,
        "workers": 2,
        "output_dir": out,
        "spec": { "time": { "mode": "white" }, "space": { "regime": "i", "alphas": [0.0] }, "amplitude": 0.15915494309189535 },
        "grid": { "d": 1, "length": 8.0, "points": 64, "dt": 0.0009765625, "horizon": 0.25 },
        "u0": { "kind": "constant_one" },
        "chaos": { "levels": [0, 1, 2], "times": [0.5], "samples": 20000 },
        "simulate": {
            "replicas": 6,
            "snapshot_times": [0.125, 0.12890625, 0.1328125, 0.140625, 0.15625, 0.1875, 0.25]
        },
        "holder": {
            "time_lags": [0.00390625, 0.0078125, 0.015625, 0.03125, 0.0625],
            "space_lags": [0.125, 0.25, 0.5, 1.0, 2.0]
        },
        "bounds": { "levels": [1, 2, 3], "times": [1.0], "moments": [2, 4] }
    })
}

/// File contents without the leading timestamp line.
fn body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# generated unix="), "{first}");
    rest.to_string()
}

#[test]
fn invalid_points_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg["grid"]["points"] = json!(100);
    let path = write_config(dir.path(), &cfg);
    let out = pamlab(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.points"), "{err}");
}

#[test]
fn override_is_validated_too() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small(dir.path()));
    let out = pamlab(&["simulate", "-c", path.to_str().unwrap(), "--set", "grid.points=96", "--set", "simulate.replicas=1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.points") && err.contains("simulate.replicas"), "{err}");
}

#[test]
fn missing_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.as_object_mut().unwrap().remove("master_seed");
    let path = write_config(dir.path(), &cfg);
    let out = pamlab(&["bounds", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("master_seed"));
}

#[test]
fn unknown_command_and_missing_file_exit_one() {
    assert_eq!(pamlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pamlab(&["chaos", "--config", "/nonexistent/config.json"]).status.code(), Some(1));
}

#[test]
fn config_round_trip() {
    for name in ["white.json", "rough.json", "selftest.json"] {
        let text = fs::read_to_string(repo_config(name)).unwrap();
        let parsed = ExperimentConfig::from_value(&serde_json::from_str(&text).unwrap()).unwrap();
        let again = ExperimentConfig::from_value(&serde_json::from_str(&parsed.to_json()).unwrap()).unwrap();
        assert_eq!(parsed, again, "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let parsed = ExperimentConfig::from_value(&small(dir.path())).unwrap();
    let again = ExperimentConfig::from_value(&serde_json::from_str(&parsed.to_json()).unwrap()).unwrap();
    assert_eq!(parsed, again);
}

#[test]
fn shipped_configs_validate() {
    use pamlab_cli::Command as C;
    for name in ["white.json", "rough.json"] {
        let cfg = ExperimentConfig::load(&repo_config(name), &[]).unwrap();
        for c in [C::Chaos, C::Simulate, C::Holder, C::Bounds, C::Selftest] {
            cfg.validate(c).unwrap_or_else(|e| panic!("{name} {c:?}: {e}"));
        }
    }
}

fn run_all(dir: &Path) {
    let path = write_config(dir, &small(&dir.join("out")));
    let p = path.to_str().unwrap();
    for cmd in ["chaos", "simulate", "holder", "bounds"] {
        let out = pamlab(&[cmd, "--config", p]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(a.path());
    run_all(b.path());
    let (oa, ob) = (a.path().join("out"), b.path().join("out"));
    for csv in ["chaos.csv", "ensemble_statistics.csv", "increments.csv", "holder_fit.csv", "bounds.csv", "region.csv"] {
        assert_eq!(body(&oa.join(csv)), body(&ob.join(csv)), "{csv}");
    }
    assert_eq!(fs::read(oa.join("ensemble.bin")).unwrap(), fs::read(ob.join("ensemble.bin")).unwrap());
    assert!(fs::read_to_string(oa.join("holder_summary.json")).unwrap().contains("\"b\": 0.5"));

    let out = pamlab(&["report", oa.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("chaos variances") && text.contains("ratio"), "{text}");
    assert!(text.contains("B = 0.5000") && text.contains("2a0+a"), "{text}");
}

#[test]
fn worker_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, workers) in [(a.path(), "1"), (b.path(), "3")] {
        let path = write_config(dir, &small(&dir.join("out")));
        let out = pamlab(&["simulate", "--config", path.to_str().unwrap(), "--set", &format!("workers={workers}")]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.path().join("out/ensemble.bin")).unwrap(),
        fs::read(b.path().join("out/ensemble.bin")).unwrap()
    );
}

#[test]
fn report_without_artifacts_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pamlab(&["report", dir.path().to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn selftest_passes_and_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "master_seed": 3,
        "output_dir": dir.path().join("out"),
        "selftest": { "samples": 50000, "replicas": 1000 }
    });
    let path = write_config(dir.path(), &cfg);
    let out = pamlab(&["selftest", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = pamlab(&["report", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("selftest") && text.contains("observed") && text.contains("tol"));
}

#[test]
fn runtime_failure_exits_two() {
    // Holder on a directory without an ensemble.
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small(&dir.path().join("out")));
    assert_eq!(pamlab(&["holder", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}
