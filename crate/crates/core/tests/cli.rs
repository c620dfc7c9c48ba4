use std::path::Path;
use std::process::{Command, Output};

use mmot_core::cli::{experiment_registry, ExperimentSpec};
use mmot_core::io::{coupling_from_json, CouplingJson};
use serde_json::Value;

fn mmot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmot")).args(args).current_dir(dir).output().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn signature_prints_one_line_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmot(&["signature", "--cost", "expcos", "--samples", "20", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().all(|l| *l == "(4,2,0)"));
}

#[test]
fn registry_round_trips_through_json() {
    let reg = experiment_registry();
    assert!(reg.len() >= 7);
    for e in reg {
        let back: ExperimentSpec = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let out = mmot(&["repro", "xyz-unique", "--grid-size", "4", "--out", name], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let strip = |v: Value| {
        let mut v = v;
        v.as_object_mut().unwrap().remove("elapsed_seconds");
        v
    };
    let (a, b) = (report(&dir.path().join("a.json")), report(&dir.path().join("b.json")));
    assert_eq!(a["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(a["spec"]["grid_size"], 4);
    assert_eq!(a["seed"], 0);
    assert!(a["elapsed_seconds"].is_f64());
    assert_eq!(strip(a), strip(b));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmot(&["repro", "no-such-thing"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("coulomb-equal") && err.contains("symmetric-witness"), "{err}");
    assert_eq!(mmot(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(mmot(&["solve", "--tol-dual", "-1"], dir.path()).status.code(), Some(1));
}

#[test]
fn solve_then_analyse_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = mmot(&["solve", "--grid-size", "5", "--out", "s.json"], p);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&p.join("s.json"));
    assert_eq!(r["passed"], true);
    assert!((r["result"]["value"].as_f64().unwrap() - r["result"]["dual_value"].as_f64().unwrap()).abs() < 1e-9);
    let coupling: CouplingJson = serde_json::from_value(r["result"]["coupling"].clone()).unwrap();
    std::fs::write(p.join("c.json"), serde_json::to_string(&coupling).unwrap()).unwrap();
    std::fs::write(p.join("u.json"), r["result"]["potentials"].to_string()).unwrap();
    let plan = coupling_from_json(&std::fs::read_to_string(p.join("c.json")).unwrap(), vec![5, 5, 5]).unwrap();
    assert!((plan.total_mass() - 1.0).abs() < 1e-12);

    for cmd in ["decompose", "check-monotone", "extremal"] {
        let out = mmot(&[cmd, "--grid-size", "5", "--coupling", "c.json", "--out", "r.json"], p);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(report(&p.join("r.json"))["result"]["is_extremal"], true);
    let out = mmot(&["check-splitting", "--grid-size", "5", "--potentials", "u.json", "--coupling", "c.json"], p);
    assert_eq!(out.status.code(), Some(0));

    let out = mmot(&["solve", "--grid-size", "4", "--format", "csv"], p);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("idx1,idx2,idx3,x1,x2,x3,mass\n"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn failed_checks_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let maps = r#"{"maps":[{"h":[0,1,2],"k":[0,1,2]},{"h":[0,1,2],"k":[2,0,1]}]}"#;
    std::fs::write(dir.path().join("maps.json"), maps).unwrap();
    let out = mmot(&["thm41", "--grid-size", "3", "--maps", "maps.json", "--out", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let r = report(&dir.path().join("t.json"));
    assert_eq!(r["passed"], false);
    assert_eq!(r["result"]["cycle"], serde_json::json!([0, 2, 1]));
}

#[test]
fn repro_witness_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmot(&["repro", "symmetric-witness", "--out", "w.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&dir.path().join("w.json"))["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
