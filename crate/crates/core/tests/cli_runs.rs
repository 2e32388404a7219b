use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use invmetric::cli::{run, Command as Step, ExperimentConfig};
use serde_json::Value;
use tempfile::TempDir;

fn invmetric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invmetric"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const ROTATIONS: &str = r#"{
  "name": "rotations",
  "domain": { "annulus": { "inner": 1.0, "outer": 2.0 } },
  "group": { "circle": {} },
  "quadrature_n": 16,
  "grid": 48,
  "samples": 50,
  "tolerances": { "invariance": 1e-12 }
}"#;

#[test]
fn passing_run_exits_zero_and_records_the_manifest() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), ROTATIONS);
    let out = tmp.path().join("out");
    let result = invmetric(&[
        "--config",
        &config,
        "--command",
        "invariance-report",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(String::from_utf8_lossy(&result.stdout).contains("invariance-report"));

    let m = manifest(&out);
    assert_eq!(m["exit_code"], 0);
    let parsed = ExperimentConfig::from_json(ROTATIONS).unwrap();
    assert_eq!(m["config_sha256"], parsed.hash());
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let defaults = m["defaults_applied"].as_object().unwrap();
    assert!(defaults.contains_key("base_metric") && defaults.contains_key("delta"));
    assert!(!defaults.contains_key("grid") && !defaults.contains_key("quadrature_n"));
    assert!(out.join("invariance.json").exists());
}

#[test]
fn tolerance_failure_exits_two_and_names_the_property() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{
  "domain": { "disc": { "center": [0.0, 0.0], "radius": 1.0 } },
  "base_metric": "poincare",
  "curvature": { "field": "base", "expected": -3.0, "margin": 0.3, "grid": 17 },
  "tolerances": { "curvature": 1e-3 }
}"#,
    );
    let out = tmp.path().join("out");
    let result = invmetric(&[
        "--config",
        &config,
        "--command",
        "curvature",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stdout).contains("FAILED"));
    let m = manifest(&out);
    assert_eq!(m["exit_code"], 2);
    assert!(!m["results"][0]["failures"].as_array().unwrap().is_empty());
}

#[test]
fn schema_errors_exit_one_and_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{ "domain": { "annulus": { "inner": 1.0, "outer": 2.0 } }, "gird": 64 }"#,
    );
    let result = invmetric(&[
        "--config",
        &config,
        "--command",
        "layers",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("gird"));
}

#[test]
fn invalid_domains_and_commands_exit_one() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), ROTATIONS);
    let result = invmetric(&[
        "--config",
        &config,
        "--command",
        "frobnicate",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));

    let bad = write_config(
        tmp.path(),
        r#"{ "domain": { "annulus": { "inner": 2.0, "outer": 1.0 } } }"#,
    );
    let out = tmp.path().join("bad");
    let result = invmetric(&[
        "--config",
        &bad,
        "--command",
        "layers",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(manifest(&out)["error"].is_string());
}

#[test]
fn reruns_are_byte_identical() {
    let config = ExperimentConfig::from_json(
        r#"{
  "domain": { "annulus": { "inner": 1.0, "outer": 2.0 } },
  "group": { "circle_with_inversion": { "inversion": 2.0 } },
  "quadrature_n": 8,
  "grid": 48,
  "samples": 40
}"#,
    )
    .unwrap();
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let outcome = run(&config, &[Step::BuildMetric], Some(dir), Some(7)).unwrap();
        assert_eq!(outcome.exit_code, 0, "{outcome:?}");
    }
    for file in ["metric.csv", "layers.csv", "build-metric.json"] {
        let (x, y) = (
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
        );
        assert!(!x.is_empty());
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let config = ExperimentConfig::from_json(ROTATIONS).unwrap();
    run(
        &config,
        &[Step::InvarianceReport],
        Some(tmp.path()),
        Some(11),
    )
    .unwrap();
    let defaults = manifest(tmp.path())["defaults_applied"].clone();
    assert!(defaults.get("seed").is_none());
    run(&config, &[Step::InvarianceReport], Some(tmp.path()), None).unwrap();
    assert_eq!(manifest(tmp.path())["defaults_applied"]["seed"], 0);
}

#[test]
fn noncompact_demo_writes_the_sequence() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{ "domain": { "disc": { "center": [0.0, 0.0], "radius": 1.0 } }, "noncompact": { "j": [2, 4] } }"#,
    );
    let result = invmetric(&[
        "--config",
        &config,
        "--command",
        "demo-noncompact",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("noncompact.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "j,x,y,boundary_distance,inverse_j");
    assert_eq!(lines.len(), 3);
}
