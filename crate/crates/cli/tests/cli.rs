use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use solderlab_core::fixtures;

fn fixture(name: &str) -> PathBuf {
    fixtures::path(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solderlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_on(command: &str, name: &str, extra: &[&str]) -> Output {
    let path = fixture(name);
    let mut args = vec![command, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

#[test]
fn check_on_flat_plane_passes() {
    let out = run_on("check", "corpus/flat.toml", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["command"], "check");
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == true));
}

#[test]
fn contact_structure_fails_check() {
    let out = run_on("check", "negative/contact.toml", &[]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    let integ = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check"] == "integrability")
        .unwrap();
    assert_eq!(integ["pass"], false);
    assert!(integ["max_residual"].as_f64().unwrap() > 0.5);
}

#[test]
fn classify_projection() {
    let out = run_on("classify", "corpus/projection.toml", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let rank = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check"] == "rank-class")
        .unwrap();
    assert_eq!(rank["detail"], "surjective, kernel dim 1");
}

#[test]
fn unknown_command_is_an_input_error() {
    let out = run_on("frobnicate", "corpus/flat.toml", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown command"));
}

#[test]
fn malformed_files_are_input_errors() {
    for path in fixtures::malformed() {
        let out = run(&["check", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{}", path.display());
        assert!(!out.stderr.is_empty());
    }
    let out = run(&["check", "/nonexistent/puzzle.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inapplicable_command_is_an_input_error() {
    let out = run_on("palatini", "corpus/flat.toml", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let a = run_on("report-all", "corpus/exponential.toml", &["--seed", "7"]);
    let b = run_on("report-all", "corpus/exponential.toml", &["--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = run_on("report-all", "corpus/exponential.toml", &["--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn report_file_and_summary_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.json");
    let out = run_on(
        "metric",
        "corpus/flat.toml",
        &["--report", path.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["pass"], true);
    assert!(written["checks"][0].get("wall_time_ms").is_none());
}

#[test]
fn timing_adds_wall_time() {
    let out = run_on("check", "corpus/flat.toml", &["--timing"]);
    let r = report(&out);
    assert!(r["checks"][0]["wall_time_ms"].is_number());
}
