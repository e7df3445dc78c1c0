//! Runs the `ledgergraph` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ledgergraph"));
    cmd.env_remove("LEDGERGRAPH_WORKERS").env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/twelve_entries.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_star(dir: &Path) -> PathBuf {
    // One business process touching four accounts.
    let csv = dir.join("star.csv");
    fs::write(
        &csv,
        "entry_id,date,account_id,amount,side\n\
         E1,2023-01-01,A,10,D\nE1,2023-01-01,B,4,C\nE1,2023-01-01,C,3,C\nE1,2023-01-01,D,3,C\n",
    )
    .unwrap();
    let net = dir.join("star.json");
    let out = run(&["build", "--input", s(&csv), "--output", s(&net), "--company", "STAR"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    net
}

#[test]
fn build_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let out = run(&["build", "--input", s(&fixture()), "--output", s(&net)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&net).unwrap()).unwrap();
    assert_eq!(doc["bp"].as_array().unwrap().len(), 3);
    assert_eq!(doc["fa"].as_array().unwrap().len(), 5);

    let stdout = run(&["build", "--input", s(&fixture())]);
    assert_eq!(stdout.stdout, fs::read(&net).unwrap());

    let stats = run(&["stats", s(&net)]);
    assert!(stats.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(doc["diameter"], 6);
    assert_eq!(doc["n_bp"], 3);
}

#[test]
fn degree_of_star_center() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_star(dir.path());
    let out = run(&["centrality", "--measure", "degree", s(&net)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node_id,partition,raw,normalized"));
    assert!(text.lines().any(|l| l == "bp:0,bp,4,1"), "{text}");

    let top = run(&["centrality", "--measure", "degree", "--top", "1", "--format", "json", s(&net)]);
    let doc: serde_json::Value = serde_json::from_slice(&top.stdout).unwrap();
    assert_eq!(doc["nodes"][0]["id"], "bp:0");
    assert_eq!(doc["nodes"][0]["normalized"], 1.0);
}

#[test]
fn fit_on_single_pattern_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_star(dir.path());
    let out = run(&["fit", "--nodes", "bp", s(&net)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient tail data"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["stats", "--bogus", "x.json"]).status.code(), Some(1));
    assert_eq!(
        run(&["fit", "--nodes", "fa", "--significance", "1.5", "x.json"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&[]).status.code(), Some(1));
    let help = run(&["centrality", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for flag in ["--measure", "--format", "--top", "--normalization", "--betweenness", "--output", "--workers"] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn missing_input_is_a_data_error() {
    let out = run(&["stats", "/nonexistent/net.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn cap_can_be_lowered() {
    let out = run(&["build", "--input", s(&fixture()), "--node-cap", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap exceeded"));
}

#[test]
fn synth_cohort_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("synth");
    let out = run(&[
        "synth", "--seed", "5", "--companies", "4", "--accounts", "80", "--entries", "1500", "--min-entries", "200",
        "--out", s(&root),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("industry_map.csv").is_file());

    let report = dir.path().join("report");
    let out = bin()
        .args(["cohort", "--dir", s(&root.join("data")), "--industry-map", s(&root.join("industry_map.csv"))])
        .args(["--out", s(&report)])
        .env("LEDGERGRAPH_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let companies = fs::read_to_string(report.join("companies.csv")).unwrap();
    assert_eq!(companies.lines().count(), 5);

    let single = dir.path().join("single");
    let out = run(&["synth", "--seed", "7", "--entries", "20000", "--out", s(&single)]);
    assert!(out.status.success());
    let csv = single.join("data/C001.csv");
    let net = dir.path().join("c1.json");
    assert!(run(&["build", "--input", s(&csv), "--output", s(&net)]).status.success());
    let curves = run(&["plotdata", "--nodes", "fa", s(&net)]);
    assert!(curves.status.success(), "{}", String::from_utf8_lossy(&curves.stderr));
    let text = String::from_utf8(curves.stdout).unwrap();
    assert!(text.starts_with("x,empirical_pdf,empirical_cdf,empirical_ccdf,pl_pdf"));
    let fit = run(&["fit", "--nodes", "fa", s(&net)]);
    assert!(fit.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert!(doc["alpha"].as_f64().unwrap() > 1.0);
}
