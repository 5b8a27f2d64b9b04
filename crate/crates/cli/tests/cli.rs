use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use fairscope::{AuditReport, Flag, Stage};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairscope"))
        .args(args)
        .env("FAIRSCOPE_NO_COLOR", "1")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["audit", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["audit", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_diagnosed() {
    let o = run(&["audit", "--input", "/nonexistent/table.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/table.csv"));
    assert!(o.stdout.is_empty());
    let o = run(&["audit"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--input"));
}

#[test]
fn bad_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.audit");
    fs::write(&cfg, "input = x.csv\ncolour = blue\n").unwrap();
    let o = run(&["audit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    let o = run(&["audit", "--input", &fixture("null.csv"), "--select-rate", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["audit", "--input", &fixture("null.csv"), "--groups", "a,x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('x'));
}

#[test]
fn flags_override_config() {
    let o = run(&["audit", "--config", &fixture("null.audit"), "--format", "json", "--select-rate", "0.2", "--groups", "b,a"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = AuditReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.config["decision"], "top_k:0.2");
    assert_eq!(r.tables[0].group_a, "b");
    assert_eq!(r.config["construct"], "hireability");
}

#[test]
fn gate_off_reports_violation_but_exits_zero() {
    let o = run(&["audit", "--config", &fixture("contaminated.audit"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stderr(&o).contains('\x1b'));
    let r = AuditReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(r.has_violation());
}

#[test]
fn null_fixture_passes_gate() {
    let o = run(&["audit", "--config", &fixture("null.audit"), "--gate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("# Bias and fairness audit"));
}

#[test]
fn output_file_and_synth_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("small.synth");
    fs::write(&spec, "seed = 11\nn_per_group = 60\nleaky_feature_weight = 3\n").unwrap();
    let csv = dir.path().join("small.csv");
    let o = run(&["synth", "--spec", spec.to_str().unwrap(), "--output", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 121);

    let report = dir.path().join("report.json");
    let o = run(&[
        "screen",
        "--input",
        csv.to_str().unwrap(),
        "--format",
        "json",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let r = AuditReport::from_json(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r.results.iter().all(|m| m.stage == Stage::Feature));
    let leak = r.results.iter().find(|m| m.metric == "feature_leakage:f_1").unwrap();
    assert_eq!(leak.flag, Flag::Suspect);
}

#[test]
fn forbidden_feature_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.synth");
    fs::write(&spec, "seed = 2\nn_per_group = 40\n").unwrap();
    let csv = dir.path().join("s.csv");
    run(&["synth", "--spec", spec.to_str().unwrap(), "--output", csv.to_str().unwrap()]);
    let o = run(&["screen", "--input", csv.to_str().unwrap(), "--forbidden", "f_2", "--format", "json"]);
    let r = AuditReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let u = r.results.iter().find(|m| m.metric == "fairness_through_unawareness").unwrap();
    assert_eq!(u.flag, Flag::Suspect);
}

#[test]
fn sweep_reports_each_rate() {
    let o = run(&["sweep", "--config", &fixture("contaminated.audit"), "--rates", "0.1,0.25", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[0]["k"], 400);
    assert_eq!(points[1]["k"], 1000);
    assert!(points[0]["predicted"]["ai_ratio"].as_f64().unwrap() < 0.8);
    let o = run(&["sweep", "--config", &fixture("contaminated.audit"), "--rates", "0.1,abc"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn strata_column_enables_conditional_parity() {
    let o = run(&["audit", "--config", &fixture("null.audit"), "--strata-col", "f_9", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let r = AuditReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let cdp = r.results.iter().find(|m| m.metric == "conditional_demographic_parity").unwrap();
    assert_eq!(cdp.flag, Flag::Undefined);
}
