//! End-to-end checks of the command-line front end: output files, manifest
//! echo, byte-identical reruns, and the documented exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wfenv::Environment;

const BIN: &str = env!("CARGO_BIN_EXE_wfenv");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_params(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    name.to_string()
}

fn setup() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let p = write_params(
        dir.path(),
        "p.json",
        r#"{"sigma": 1.0, "theta": 1.0, "nu0": 0.5, "measure": {"atoms": [{"mass": 0.5, "peak": 0.3}]}}"#,
    );
    let e = write_params(dir.path(), "env.json", r#"{"horizon": 1.0, "jumps": [{"t": 0.5, "dp": 0.3}]}"#);
    (dir, p, e)
}

#[test]
fn solver_output_and_manifest_roundtrip() {
    let (dir, p, _) = setup();
    let out = run(dir.path(), &["solve-wn", "--params", &p, "--k", "12", "--out", "w.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("w.json")).unwrap()).unwrap();
    assert_eq!(w["K"], 12);
    assert_eq!(w["values"][0], 1.0);
    assert!(w["defect"].as_f64().unwrap().abs() < 1e-8);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("w.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "solve-wn");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config"]["K"], 12);
    assert_eq!(m["config"]["params"]["theta"], 1.0);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let (dir, p, e) = setup();
    let args = [
        "simulate-diffusion", "--params", &p, "--env", &e, "--x0", "0.4", "--horizon", "1",
        "--dt", "0.001", "--seed", "11",
    ];
    let mut a = args.to_vec();
    a.extend(["--out", "a.csv"]);
    let mut b = args.to_vec();
    b.extend(["--out", "b.csv"]);
    assert!(run(dir.path(), &a).status.success());
    assert!(run(dir.path(), &b).status.success());
    let pa = fs::read(dir.path().join("a.csv")).unwrap();
    let pb = fs::read(dir.path().join("b.csv")).unwrap();
    assert!(!pa.is_empty());
    assert_eq!(pa, pb);
}

#[test]
fn sampled_environment_parses_and_stays_in_window() {
    let (dir, p, _) = setup();
    let out = run(
        dir.path(),
        &["env-sample", "--params", &p, "--horizon", "4", "--seed", "9", "--out", "env-out.json"],
    );
    assert!(out.status.success());
    let env: Environment =
        serde_json::from_str(&fs::read_to_string(dir.path().join("env-out.json")).unwrap()).unwrap();
    assert_eq!(env.horizon, 4.0);
    assert!(env.jumps.iter().all(|j| (0.0..=4.0).contains(&j.t) && j.dp == 0.3));
}

#[test]
fn duality_check_reports_agreement() {
    let (dir, p, _) = setup();
    let out = run(
        dir.path(),
        &[
            "duality-check", "--params", &p, "--mode", "annealed", "--n", "1", "--x", "0.5",
            "--horizon", "1", "--dt", "0.005", "--replicates", "3000", "--seed", "7",
            "--out", "dc.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dc.json")).unwrap()).unwrap();
    assert_eq!(r["pass"], true);
    assert!(r["z"].as_f64().unwrap().abs() <= 3.0);
}

#[test]
fn domain_errors_exit_one() {
    let (dir, _, _) = setup();
    let bad = write_params(dir.path(), "bad.json", r#"{"sigma": 1.0, "theta": 1.0, "nu0": 2.0}"#);
    let out = run(dir.path(), &["solve-wn", "--params", &bad, "--k", "8", "--out", "w.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("w.json").exists());
}

#[test]
fn convergence_failures_exit_two() {
    let (dir, p, _) = setup();
    // tol = 0 can never be met, so the doubling loop must give up
    let out = run(
        dir.path(),
        &["solve-wn", "--params", &p, "--k", "8", "--tol", "0", "--out", "w.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sigma_zero_commands_reject_selection() {
    let (dir, p, e) = setup();
    let out = run(
        dir.path(),
        &["quenched-moments", "--params", &p, "--env", &e, "--x", "0.5", "--out", "q.json"],
    );
    assert_eq!(out.status.code(), Some(1));
}
