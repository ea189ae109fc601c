use std::fs;
use std::path::Path;
use std::process::Command;

fn fracwest(args: &[&str], config: &str, out: &Path) -> i32 {
    let dir = out.parent().unwrap();
    let cfg = dir.join(format!("{}.json", out.file_name().unwrap().to_string_lossy()));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fracwest"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

const SMALL: &str = r#"{"n_cells": 20, "n_steps": 200}"#;

#[test]
fn bad_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    assert_eq!(fracwest(&["forward"], r#"{"n_cells": 20, "bogus": 1}"#, &out), 2);
    assert_eq!(fracwest(&["forward"], r#"{"alpha": 1.5}"#, &tmp.path().join("b")), 2);
    assert_eq!(fracwest(&["alpha-sweep"], r#"{"n_cells": 20, "n_steps": 200, "alphas": [1.5]}"#, &tmp.path().join("c")), 2);
    assert_eq!(fracwest(&["forward"], "not json", &tmp.path().join("d")), 2);
    let status = Command::new(env!("CARGO_BIN_EXE_fracwest"))
        .args(["forward", "--config", "/nonexistent/cfg.json", "--out"])
        .arg(tmp.path().join("e"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn forward_writes_outputs_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fw");
    assert_eq!(fracwest(&["forward"], SMALL, &out), 0);
    for f in ["u.csv", "trace.csv", "energy.csv", "meta.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "forward");
    assert_eq!(meta["config"]["n_cells"], 20);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,u_0.1,u_1\n"));
    assert_eq!(trace.lines().count(), 202);
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("s1"), tmp.path().join("s2"));
    assert_eq!(fracwest(&["synth", "--seed", "7"], SMALL, &a), 0);
    assert_eq!(fracwest(&["synth", "--seed", "7"], SMALL, &b), 0);
    for f in ["trace_clean.csv", "trace_noisy.csv", "meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("s3");
    assert_eq!(fracwest(&["synth", "--seed", "8"], SMALL, &c), 0);
    assert_ne!(fs::read(a.join("trace_noisy.csv")).unwrap(), fs::read(c.join("trace_noisy.csv")).unwrap());
    assert_eq!(fs::read(a.join("trace_clean.csv")).unwrap(), fs::read(c.join("trace_clean.csv")).unwrap());
}

#[test]
fn single_alpha_sweep_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let cfg = r#"{"n_cells": 20, "n_steps": 200, "alphas": [0.5]}"#;
    assert_eq!(fracwest(&["alpha-sweep"], cfg, &out), 0);
    let rows = fs::read_to_string(out.join("alpha_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}

#[test]
fn unmet_discrepancy_exits_four_with_outputs() {
    // on this coarse grid the synthesis mismatch exceeds τδ at tiny noise
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rc");
    let cfg = r#"{"n_cells": 20, "n_steps": 200, "noise_rel": 1e-5, "max_iters": 3}"#;
    assert_eq!(fracwest(&["reconstruct"], cfg, &out), 4);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["results"]["discrepancy_met"], false);
    assert_eq!(meta["results"]["iterations"], 3);
    let hist = fs::read_to_string(out.join("newton_history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 5);
}

#[test]
fn large_noise_stops_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rl");
    let cfg = r#"{"n_cells": 20, "n_steps": 200, "noise_rel": 0.5}"#;
    assert_eq!(fracwest(&["reconstruct"], cfg, &out), 0);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["results"]["iterations"], 0);
    assert_eq!(meta["results"]["discrepancy_met"], true);
}

#[test]
fn svd_is_sorted() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sv");
    assert_eq!(fracwest(&["svd"], SMALL, &out), 0);
    let mut rdr = csv::Reader::from_path(out.join("sv.csv")).unwrap();
    let s: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(s.len(), 40);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
}
