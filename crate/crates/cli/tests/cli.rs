use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn srg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn srg")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = srg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn build_validate_infer_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--kind", "complete", "--n", "5", "--seed", "2", "--out", "m.txt"]);
    ok(d, &["build", "--kind", "star", "--width", "2", "--model", "m.txt", "--out", "s.rg"]);
    assert!(ok(d, &["validate", "--rg", "s.rg"]).starts_with("valid"));
    let json: serde_json::Value =
        serde_json::from_str(&ok(d, &["infer", "--model", "m.txt", "--rg", "s.rg", "--csv", "m.csv"])).unwrap();
    assert_eq!(json["converged"], true);
    assert_eq!(json["marginals"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
    let exact: serde_json::Value = serde_json::from_str(&ok(d, &["exact", "--model", "m.txt"])).unwrap();
    assert!(exact["log_partition"].as_f64().unwrap().is_finite());
}

#[test]
fn every_build_kind_produces_a_valid_graph() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--kind", "grid", "--rows", "4", "--cols", "4", "--out", "g.txt"]);
    ok(d, &["generate", "--kind", "bipartite", "--n", "2", "--right", "3", "--out", "k.txt"]);
    let cases: [&[&str]; 7] = [
        &["--kind", "bethe", "--model", "g.txt"],
        &["--kind", "squares", "--model", "g.txt", "--rows", "4", "--cols", "4"],
        &["--kind", "faces", "--model", "g.txt", "--rows", "4", "--cols", "4"],
        &["--kind", "loops", "--model", "g.txt", "--loops", "0-1-5-4,5-6-10-9"],
        &["--kind", "epgraph", "--ep", "grid-tree", "--model", "g.txt", "--rows", "4", "--cols", "4"],
        &["--kind", "epgraph", "--ep", "k23", "--model", "k.txt"],
        &["--kind", "star", "--model", "k.txt", "--order", "2,0,1,3,4"],
    ];
    for case in cases {
        let mut args = vec!["build", "--out", "x.rg"];
        args.extend_from_slice(case);
        ok(d, &args);
        ok(d, &["validate", "--rg", "x.rg"]);
    }
}

#[test]
fn reduce_and_diagnose_report_traces() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--kind", "complete", "--n", "4", "--out", "m.txt"]);
    ok(d, &["build", "--kind", "epgraph", "--model", "m.txt", "--out", "ep.rg"]);
    let trace = ok(d, &["reduce", "--rg", "ep.rg", "--out", "r.rg"]);
    assert!(trace.contains("steps;"));
    ok(d, &["validate", "--rg", "r.rg"]);
    let diag = ok(d, &["diagnose", "--rg", "r.rg"]);
    assert!(diag.contains("verdict: non-singular"));
    // all four triangles of K4 as loops: singular
    ok(d, &["build", "--kind", "loops", "--model", "m.txt", "--loops", "0-1-2,0-1-3,0-2-3,1-2-3", "--out", "l.rg"]);
    let diag = ok(d, &["diagnose", "--rg", "l.rg"]);
    assert!(diag.contains("verdict: singular"));
    assert!(diag.contains("loop peeling: singular"));
    let dot = ok(d, &["export-dot", "--rg", "l.rg"]);
    assert!(dot.starts_with("digraph") && dot.contains("c = "));
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--kind", "grid", "--rows", "5", "--cols", "5", "--out", "big.txt"]);
    let out = srg(d, &["exact", "--model", "big.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds limit"));

    ok(d, &["generate", "--kind", "complete", "--n", "3", "--out", "m.txt"]);
    ok(d, &["build", "--kind", "bethe", "--model", "m.txt", "--out", "b.rg"]);
    // drop the edges so variables lose their connecting regions
    let broken: String = std::fs::read_to_string(d.join("b.rg"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("edge"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(d.join("broken.rg"), broken).unwrap();
    let out = srg(d, &["validate", "--rg", "broken.rg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    std::fs::write(d.join("bad.txt"), "var 0 2\nfactor 0 0 1 2\n").unwrap();
    let out = srg(d, &["exact", "--model", "bad.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(srg(d, &["exact", "--model", "missing.txt"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(srg(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(srg(d, &["infer", "--model", "m.txt"]).status.code(), Some(2));
    assert_eq!(srg(d, &["experiment", "--name", "nope", "--out", "x.csv"]).status.code(), Some(2));
    assert_eq!(srg(d, &["build", "--kind", "hexagons", "--model", "m", "--out", "o"]).status.code(), Some(2));
    for sub in ["build", "validate", "reduce", "diagnose", "infer", "exact", "pursue", "experiment", "export-dot"] {
        let help = srg(d, &[sub, "--help"]);
        assert!(help.status.success());
        assert!(String::from_utf8_lossy(&help.stdout).contains("Usage"));
    }
}

#[test]
fn experiment_writes_trial_and_aggregate_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["experiment", "--name", "table1_complete", "--trials", "3", "--seed", "7", "--out", "t1.csv"];
    ok(d, &args);
    let csv = std::fs::read_to_string(d.join("t1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("trial,method,step"));
    assert_eq!(lines.len(), 1 + 3 * 7 + 7);
    assert_eq!(lines.iter().filter(|l| l.starts_with("mean,")).count(), 7);
    std::fs::rename(d.join("t1.csv"), d.join("first.csv")).unwrap();
    ok(d, &args);
    let again = std::fs::read_to_string(d.join("t1.csv")).unwrap();
    let strip = |s: &str| srg_core::harness::strip_wall_time(s);
    assert_eq!(strip(&csv), strip(&again));
}

#[test]
fn pursue_emits_per_step_csv() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = ok(d, &["pursue", "--trials", "2", "--seed", "1", "--constrain", "--max-triangles", "2"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "trial,step,triangle,accepted,error,free_energy,iterations");
    assert!(lines.iter().filter(|l| l.starts_with("1,")).count() >= 3);
}
