use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weaktrans"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn run(cmd: &str, scenario: &Path, out: &Path) -> std::process::Output {
    bin()
        .args([cmd, "--scenario"])
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn malformed_json_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"model\": ").unwrap();
    let out = dir.path().join("out");
    let o = run("features", &bad, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert!(!out.exists());
}

#[test]
fn schema_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"model": {"family": "lognormal"}, "kernal": {}}"#).unwrap();
    let o = run("features", &bad, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernal"));
}

#[test]
fn unknown_subcommand_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("frobnicate", &scenario("location"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_block_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run("stein", &scenario("location"), &out).status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(run("features", &dir.path().join("nope.json"), &out).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.json");
    // One refinement level cannot reach this tolerance.
    fs::write(
        &sc,
        r#"{"model": {"family": "cauchy_location"},
            "kernel": {"kind": "gaussian", "s": 1.0, "normalized": true},
            "features": {"kind": "moments", "orders": [0, 1]},
            "quadrature": {"abs_tol": 1e-300, "rel_tol": 1e-300, "max_levels": 1, "transform": "double_exponential"},
            "grids": {"theta": [[0.0]]}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run("features", &sc, &out);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(!out.exists());
}

#[test]
fn help_exits_0() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
}

#[test]
fn classify_cauchy_reports_classical_failure_and_weak_finiteness() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("classify", &scenario("cauchy"), dir.path());
    assert!(o.status.success(), "{o:?}");
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("classify.json")).unwrap()).unwrap();
    let r = &v["result"];
    assert_eq!(r["type0"]["classical_undefined"], true);
    assert_eq!(r["type0"]["weak_finite"], true);
    assert_eq!(r["type3"]["classically_indeterminate"], true);
    assert_eq!(r["type2"]["flagged"], false);
    assert_eq!(v["command"], "classify");
    // The resolved scenario, defaults included, is embedded.
    assert_eq!(v["scenario"]["grids"]["theta"].as_array().unwrap().len(), 101);
    assert_eq!(v["scenario"]["rank"]["rank_rtol"], 1e-10);
    let rows = csv_column(&dir.path().join("classify.csv"), "theta_rank");
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r == "1"));
}

#[test]
fn behrens_fisher_nuisance_column_decreases() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("behrens-fisher", &scenario("behrens_fisher"), dir.path()).status.success());
    let path = dir.path().join("behrens-fisher.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("s,sup_nuisance_gap,signal_gap,ratio\n"));
    assert!(!text.contains('\r'));
    let gaps: Vec<f64> = csv_column(&path, "sup_nuisance_gap").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(gaps.len(), 6);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn location_transversality_needs_the_kernel_direction() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("transversality", &scenario("location"), dir.path()).status.success());
    let path = dir.path().join("transversality.csv");
    let on = csv_column(&path, "on_stratum");
    let theta_only = csv_column(&path, "theta_only");
    let joint = csv_column(&path, "transversal");
    let gain = csv_column(&path, "enrichment_gain");
    let mut hits = 0;
    for i in 0..on.len() {
        if on[i] == "true" {
            hits += 1;
            assert_eq!(theta_only[i], "false");
            assert_eq!(joint[i], "true");
            assert_eq!(gain[i], "1");
        } else {
            assert_eq!(joint[i], "");
        }
    }
    assert_eq!(hits, 10);
}

#[test]
fn stein_reports_candidates_and_zero_set() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("stein", &scenario("stein"), dir.path()).status.success());
    let path = dir.path().join("stein.csv");
    let kinds = csv_column(&path, "row_type");
    assert_eq!(kinds.iter().filter(|k| *k == "zero_set").count(), 5);
    let marginal = csv_column(&path, "marginal");
    assert!(marginal.iter().all(|m| m != "true"));
    let disc: Vec<f64> = csv_column(&path, "discrepancy")
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(disc[0] < 1e-8);
    assert!(disc[1] > 1e-3);
}

#[test]
fn location_sweep_has_no_bad_scales() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("sweep", &scenario("location"), dir.path()).status.success());
    let fired = csv_column(&dir.path().join("sweep.csv"), "fired");
    assert_eq!(fired.len(), 10);
    assert!(fired.iter().all(|f| f == "0"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (sc, cmd) in [("lognormal", "jacobian"), ("graphical_cycle", "features"), ("stein", "stein")] {
        assert!(run(cmd, &scenario(sc), a.path()).status.success());
        assert!(run(cmd, &scenario(sc), b.path()).status.success());
        for ext in ["json", "csv"] {
            let f = format!("{cmd}.{ext}");
            assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
        }
    }
}
