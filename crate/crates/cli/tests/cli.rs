//! End-to-end runs of the `wsphase` binary.

use std::fs;
use std::process::{Command, Output};

fn wsphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsphase"))
        .args(args)
        .env_remove("WSPHASE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_suites_names_every_suite() {
    let o = wsphase(&["list-suites"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["projectors", "adjusted-ricci", "slice-independence", "yang-mills", "linearized-gr"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "missing {name}");
    }
}

#[test]
fn verify_writes_requested_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wsphase(&["verify", "projectors", "--out", out, "--format", "json,csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("projectors.json").exists());
    assert!(dir.path().join("projectors.csv").exists());
    assert!(!dir.path().join("projectors.svg").exists());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("projectors.json")).unwrap()).unwrap();
    assert_eq!(json["summary"]["ok"], true);
    assert!(stdout(&o).contains("projectors: 27 checks"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wsphase"))
        .args(["verify", "gauss-bonnet", "--format", "csv"])
        .env("WSPHASE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("gauss-bonnet.csv").exists());
}

#[test]
fn identical_runs_give_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let read = |d: &tempfile::TempDir| {
        let o = wsphase(&["verify", "nilpotency", "--out", d.path().to_str().unwrap(), "--format", "json"]);
        assert_eq!(o.status.code(), Some(0));
        fs::read_to_string(d.path().join("nilpotency.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(read(&a), read(&b));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    fs::write(&cfg, r#"{ "tolerances": { "gauss_bonnet_rel": 1e-9 }, "fixtures": ["sphere"] }"#).unwrap();
    let o = wsphase(&["verify", "gauss-bonnet", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("Fail"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(wsphase(&["verify", "no-such-suite", "--out", out]).status.code(), Some(2));
    assert_eq!(wsphase(&["verify", "projectors", "--out", out, "--format", "pdf"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{ "unknown_key": true }"#).unwrap();
    assert_eq!(wsphase(&["verify", "projectors", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(wsphase(&["verify", "projectors", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    assert_eq!(wsphase(&["verify", "adjusted-ricci", "--grid", "2", "--out", out]).status.code(), Some(2));
}

#[test]
fn grid_option_rescales_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = wsphase(&["verify", "linearized-gr", "--grid", "128", "--out", dir.path().to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("linearized-gr.json")).unwrap()).unwrap();
    let levels = json["checks"][0]["levels"].as_array().unwrap();
    assert_eq!(levels.last().unwrap().as_u64(), Some(128));
    assert_eq!(levels.len(), 3);
}

#[test]
fn solve_catenoid_reports_area() {
    let dir = tempfile::tempdir().unwrap();
    let o = wsphase(&["solve", "catenoid", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("catenoid area"));
    assert!(dir.path().join("catenoid.csv").exists());
}

#[test]
fn solve_catenoid_nonconvergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    fs::write(&cfg, r#"{ "solver": { "max_iterations": 1 } }"#).unwrap();
    let o = wsphase(&["solve", "catenoid", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}
