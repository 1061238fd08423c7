//! End-to-end runs of the `gflow` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn events(dir: &Path) -> Vec<Value> {
    std::fs::read_to_string(dir.join("events.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn kinds<'a>(ev: &'a [Value], kind: &str) -> Vec<&'a Value> {
    ev.iter().filter(|e| e["kind"] == kind).collect()
}

fn snapshots(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

const SPHERE: &str = r#"{"schema_version": 1, "scenario": {"kind": "sphere"}, "step": {"spacing": 0.02}}"#;
const CYLINDER: &str = r#"{"schema_version": 1, "scenario": {"kind": "cylinder", "r0": 1.0, "length": 2.0}, "t_end": 0.05}"#;
const DUMBBELL: &str = r#"{"schema_version": 1, "scenario": {"kind": "dumbbell"}}"#;

#[test]
fn sphere_run_has_no_surgery() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SPHERE);
    let out = dir.path().join("out");
    let o = gflow(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ev = events(&out);
    assert!(kinds(&ev, "surgery").is_empty());
    let term = kinds(&ev, "termination");
    assert_eq!(term.len(), 1);
    assert_eq!(term[0]["exit_code"], 0);
    let snaps = snapshots(&out);
    assert!(snaps.len() > 2);
    let first = snaps[0].file_name().unwrap().to_str().unwrap();
    assert_eq!(first, "t0.000000_c0.csv");
    let text = std::fs::read_to_string(&snaps[0]).unwrap();
    assert_eq!(text.lines().next().unwrap(), "s,x,u,phi,lambda1,lambda_rot,G,H");
    let est = std::fs::read_to_string(out.join("estimates.jsonl")).unwrap();
    let line: Value = serde_json::from_str(est.lines().next().unwrap()).unwrap();
    for key in ["t", "max_g", "min_l1_over_g", "max_h_over_g", "grad_ratio", "time_ratio", "area"] {
        assert!(line.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn dumbbell_run_ends_with_all_spheres() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", DUMBBELL);
    let out = dir.path().join("out");
    let o = gflow(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ev = events(&out);
    assert_eq!(kinds(&ev, "surgery").len(), 1);
    assert!(!kinds(&ev, "neck_detected").is_empty());
    assert!(!kinds(&ev, "component_discarded").is_empty());
    let term = kinds(&ev, "termination");
    assert_eq!(term[0]["verdict"], "all components spheres");
    assert_eq!(ev.last().unwrap()["kind"], "termination");

    let waist = gflow::scenario::BulbChain::dumbbell().waist_centres()[0];
    let t_surgery = kinds(&ev, "surgery")[0]["t"].as_f64().unwrap();
    let name = format!("t{t_surgery:.6}_c0.csv");
    let pinch = out.join("snapshots").join(name);
    assert!(pinch.exists(), "no snapshot at the trigger");
    let o = gflow(&["detect", pinch.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    let regions: Vec<Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(regions.iter().any(|r| {
        let x = r["axial_interval"].as_array().unwrap();
        x[0].as_f64().unwrap() <= waist && x[1].as_f64().unwrap() >= waist
    }));
}

#[test]
fn broken_threshold_chain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"schema_version": 1, "scenario": {"kind": "dumbbell"}, "thresholds": {"g1": 5, "g2": 5, "g3": 10}}"#,
    );
    let o = gflow(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("g1 < g2 < g3"), "{err}");
}

#[test]
fn override_can_break_the_chain_too() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", DUMBBELL);
    let o = gflow(
        &["run", "--config", cfg.to_str().unwrap(), "--override", "thresholds.g2=1"],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("thresholds"));
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body, needle) in [
        ("u.json", r#"{"schema_version": 1, "scenario": {"kind": "sphere"}, "stepp": {}}"#, "stepp"),
        ("v.json", r#"{"schema_version": 7, "scenario": {"kind": "sphere"}}"#, "schema_version"),
        ("j.json", "{\"schema_version\": 1,\n \"scenario\": }", "line 2"),
        ("k.json", r#"{"schema_version": 1, "scenario": {"kind": "torus"}}"#, "torus"),
    ] {
        let cfg = write_config(dir.path(), name, body);
        let o = gflow(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
        assert_eq!(o.status.code(), Some(1), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = gflow(&["run", "--config", "/nonexistent/c.json"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CYLINDER);
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_gflow"))
        .args(["run", "--quiet", "--config", cfg.to_str().unwrap()])
        .env("OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("events.jsonl").exists());
}

#[test]
fn detect_on_model_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cyl = write_config(dir.path(), "c.json", CYLINDER);
    assert_eq!(gflow(&["run", "--config", cyl.to_str().unwrap()], &out).status.code(), Some(0));
    let snap = &snapshots(&out)[0];
    let o = gflow(&["detect", snap.to_str().unwrap(), "--override", "neck.g0=0.2"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let regions: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(regions.len(), 1);
    let interval = regions[0]["interval"].as_array().unwrap();
    assert_eq!(interval[0].as_f64().unwrap(), 0.0);
    assert!((interval[1].as_f64().unwrap() - 2.0).abs() < 1e-9);

    let o = gflow(&["detect", snap.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(5), "below the default g0");

    let sph_out = dir.path().join("sphere");
    let sph = write_config(dir.path(), "s.json", SPHERE);
    assert_eq!(gflow(&["run", "--config", sph.to_str().unwrap()], &sph_out).status.code(), Some(0));
    for snap in snapshots(&sph_out) {
        let o = gflow(&["detect", snap.to_str().unwrap(), "--override", "neck.g0=0.1"], &out);
        assert_eq!(o.status.code(), Some(5));
        assert!(o.stdout.is_empty());
    }

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,u\n1,2\n").unwrap();
    assert_eq!(gflow(&["detect", bad.to_str().unwrap()], &out).status.code(), Some(1));
}

#[test]
fn runs_are_reproducible_and_sweep_without_axes_is_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SPHERE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(gflow(&["run", "--config", cfg.to_str().unwrap()], &a).status.code(), Some(0));
    assert_eq!(gflow(&["sweep", "--config", cfg.to_str().unwrap()], &b).status.code(), Some(0));
    let cell = b.join("cell_000");
    for f in ["events.jsonl", "estimates.jsonl", "config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(cell.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(b.join("sweep_summary.jsonl")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

fn sweep_necks(axis: &str) -> Vec<(i64, u64, u64)> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", DUMBBELL);
    let out = dir.path().join("sweep");
    let o = gflow(&["sweep", "--config", cfg.to_str().unwrap(), "--override", axis], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    std::fs::read_to_string(out.join("sweep_summary.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            let o = &v["outcome"];
            (
                o["exit_code"].as_i64().unwrap(),
                o["surgeries"].as_u64().unwrap(),
                o["necks_detected"].as_u64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn epsilon_sweep_is_antitone_in_strictness() {
    let cells = sweep_necks("neck.epsilon=[0.05,0.1,0.2]");
    assert_eq!(cells.len(), 3);
    assert!(cells.iter().all(|c| c.0 == 0));
    assert!(cells[0].2 <= cells[1].2 && cells[1].2 <= cells[2].2, "{cells:?}");
}

#[test]
fn trigger_sweep_needs_one_surgery_each() {
    let cells = sweep_necks("thresholds.g3=[7.5,10,15]");
    assert_eq!(cells.len(), 3);
    for c in cells {
        assert_eq!((c.0, c.1), (0, 1));
    }
}

#[test]
fn validate_detects_the_wrong_shrinking_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = gflow(&["validate", "--override", "neck.rho=mean_curvature"], &dir.path().join("v"));
    assert_eq!(o.status.code(), Some(4));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[FAIL] 13 neck detection"), "{text}");
}
