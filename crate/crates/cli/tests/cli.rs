use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models").join(name)
}

fn s0() -> PathBuf {
    model("predator_s0.sbs")
}

fn s1() -> PathBuf {
    model("predator_s1.sbs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbcheck")).args(args).env_remove("SBCHECK_COLOR").output().expect("binary runs")
}

fn run_on(cmd: &str, file: &Path, rest: &[&str]) -> Output {
    let mut args = vec![cmd, file.to_str().unwrap()];
    args.extend_from_slice(rest);
    run(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_model(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const ONE_STATE: &str = "system \"one\"\nobservables { x: bool; }\nbehaviour { state q0 { x = true } init; }\nstructure { state r0: \"x\" init; }\n";

/// A small system on which the weak relation and `EG(adapting -> EF steady)` disagree.
const CORNER: &str = r#"system "corner"
observables {
  x0: bool;
  x1: bool;
  x2: bool;
}
behaviour {
  state q0 { x0 = false, x1 = true, x2 = true } init;
  state q1 { x0 = true, x1 = false, x2 = false };
  state q2 { x0 = false, x1 = false, x2 = true };
  state q3 { x0 = false, x1 = false, x2 = false };
  q0 -> q2;
  q1 -> q2;
  q2 -> q1;
  q2 -> q3;
}
structure {
  state r0: "x2" init;
  state r2: "x2";
  r0 -["true"]-> r2;
}
"#;

#[test]
fn validate_exit_codes() {
    let o = run_on("validate", &s0(), &[]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("well-formed"));

    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(s0()).unwrap().replace("state r2: \"moved\"", "state r2: \"moved && !moved\"");
    let bad = write_model(&dir, "bad.sbs", &text);
    let o = run_on("validate", &bad, &[]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("`r2`"));
    let o = run_on("validate", &bad, &["--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["well_formed"], false);
    assert_eq!(v["violations"][0]["violation"], "unsatisfiable");
    assert_eq!(v["violations"][0]["name"], "r2");

    let o = run(&["validate", "/definitely/missing.sbs"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn parse_errors_report_line_and_column() {
    let dir = TempDir::new().unwrap();
    let p = write_model(&dir, "broken.sbs", &ONE_STATE.replace("x = true", "x = maybe"));
    let o = run_on("validate", &p, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(":3:28:"), "{}", stderr(&o));
}

#[test]
fn ill_formed_models_are_refused_by_analyses() {
    let dir = TempDir::new().unwrap();
    let p = write_model(&dir, "out.sbs", &ONE_STATE.replace("\"x\" init", "\"!x\" init"));
    for cmd in ["flatten", "adapt", "equiv", "simulate"] {
        assert_eq!(code(&run_on(cmd, &p, &[])), 3, "{cmd}");
    }
    assert_eq!(code(&run_on("ctl", &p, &["--formula", "AG true"])), 3);
}

#[test]
fn flatten_json_matches_schema() {
    let o = run_on("flatten", &s1(), &["--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["init"], 0);
    let states = v["states"].as_array().unwrap();
    assert_eq!(states.len(), 10);
    for (i, s) in states.iter().enumerate() {
        assert_eq!(s["id"], i);
        assert!(s["q"].is_string() && s["r"].is_string());
        assert!(["steady", "adapting", "stuck"].contains(&s["class"].as_str().unwrap()));
        let p = &s["pending"];
        assert!(p.is_null() || (p["inv"].is_string() && p["target"].is_string()));
    }
    let trans = v["transitions"].as_array().unwrap();
    assert_eq!(trans.len(), 11);
    for t in trans {
        assert!(t["from"].as_u64().unwrap() < 10 && t["to"].as_u64().unwrap() < 10);
        match t["kind"].as_str().unwrap() {
            "steady" => assert!(t["inv"].is_null() && t["target"].is_null()),
            "adapt" => assert!(t["inv"].is_string() && t["target"].is_string()),
            other => panic!("unexpected kind {other}"),
        }
    }
}

/// Statement-level check of the DOT output: a single digraph block whose
/// inner lines are node or edge statements ending in `;`.
fn dot_is_well_formed(text: &str) -> bool {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let (Some(first), Some(last)) = (lines.first(), lines.last()) else { return false };
    if !(first.starts_with("digraph") && first.ends_with('{') && *last == "}") {
        return false;
    }
    lines[1..lines.len() - 1].iter().all(|l| {
        let brackets = l.matches('[').count() == l.matches(']').count();
        let quotes = l.matches('"').count() % 2 == 0;
        l.ends_with(';') && brackets && quotes
    })
}

#[test]
fn flatten_dot_output() {
    let o = run_on("flatten", &s0(), &["--dot"]);
    assert_eq!(code(&o), 0);
    assert!(dot_is_well_formed(&stdout(&o)), "{}", stdout(&o));

    let dir = TempDir::new().unwrap();
    let p = write_model(&dir, "one.sbs", ONE_STATE);
    let o = run_on("flatten", &p, &["--dot"]);
    let text = stdout(&o);
    assert!(dot_is_well_formed(&text));
    assert_eq!(text.matches(" -> ").count(), 0);
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with("s0 [")).count(), 1);
    assert_eq!(code(&run_on("flatten", &p, &["--dot", "--json"])), 2);
}

#[test]
fn adapt_reproduces_both_verdicts() {
    let o = run_on("adapt", &s0(), &["--both", "--method", "both"]);
    let out = stdout(&o);
    assert!(out.contains("weak   relational true"));
    assert!(out.contains("weak   ctl        true"));
    assert!(out.contains("strong relational false"));
    assert!(out.contains("strong ctl        false"));
    assert!(out.contains("methods agree"));
    assert_eq!(code(&o), 1);

    let o = run_on("adapt", &s1(), &["--strong", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let verdicts = v["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    assert!(verdicts.iter().all(|x| x["property"] == "strong" && x["holds"] == true));
    assert!(verdicts.iter().all(|x| x.get("timing_ms").is_none()));
}

#[test]
fn adapt_witness_prints_counterexample() {
    let o = run_on("adapt", &s0(), &["--strong", "--witness"]);
    let out = stdout(&o);
    assert!(out.contains("counterexample:"));
    assert!(out.contains("(q5, r0, {(!moved, r1)})"));
    let o = run_on("adapt", &s0(), &["--strong", "--witness", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let path = &v["witnesses"][0]["path"];
    assert_eq!(path["states"][0], "(q0, r0, ∅)");
    assert!(path["loop_start"].is_u64());
}

#[test]
fn discrepancy_is_reported_with_pair() {
    let dir = TempDir::new().unwrap();
    let p = write_model(&dir, "corner.sbs", CORNER);
    let o = run_on("adapt", &p, &["--weak"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("DISCREPANCY weak"), "{out}");
    assert!(out.contains("minimal offending pair (q0, r0)"));
    let o = run_on("adapt", &p, &["--weak", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["discrepancies"][0]["pair"], serde_json::json!(["q0", "r0"]));
}

#[test]
fn equiv_partitions() {
    let dir = TempDir::new().unwrap();
    let p = write_model(&dir, "one.sbs", ONE_STATE);
    let o = run_on("equiv", &p, &["--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["blocks"], serde_json::json!([["q0"]]));

    for kind in ["--weak", "--strong"] {
        let o = run_on("equiv", &s0(), &[kind, "--json"]);
        assert_eq!(code(&o), 0);
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let mut all: Vec<String> = v["blocks"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|b| b.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()))
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 14);
    }
}

#[test]
fn ctl_queries() {
    let o = run_on("ctl", &s0(), &["--formula", "EG(adapting -> EF steady)"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(": true"));
    assert_eq!(code(&run_on("ctl", &s0(), &["--formula", "AG(adapting -> AF steady)"])), 1);
    let o = run_on("ctl", &s1(), &["--formula", "AG true", "--json"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["satisfying"].as_array().unwrap().len(), v["states"].as_u64().unwrap() as usize);

    let o = run_on("ctl", &s0(), &["--formula", "AG (adapting"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("offset 12"));
    assert_eq!(code(&run_on("ctl", &s0(), &["--formula", "in(r9)"])), 2);
    assert_eq!(code(&run_on("ctl", &s0(), &["--formula", "@(p == true)"])), 2);
}

#[test]
fn simulate_is_reproducible() {
    let a = run_on("simulate", &s1(), &["--steps", "30", "--seed", "42"]);
    let b = run_on("simulate", &s1(), &["--steps", "30", "--seed", "42"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let o = run_on("simulate", &s1(), &["--steps", "0"]);
    assert_eq!(stdout(&o).lines().collect::<Vec<_>>(), vec!["   0              (q0, r0, ∅)"]);

    let reaches = (0..20).any(|seed| {
        let o = run_on("simulate", &s1(), &["--steps", "20", "--seed", &seed.to_string(), "--json"]);
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["steps"].as_array().unwrap().iter().any(|s| s["rule"] == "AdaptStart")
    });
    assert!(reaches);
}

#[test]
fn color_is_opt_in() {
    let plain = run_on("adapt", &s1(), &[]);
    assert!(!stdout(&plain).contains('\x1b'));
    let colored = Command::new(env!("CARGO_BIN_EXE_sbcheck"))
        .args(["adapt", s1().to_str().unwrap()])
        .env("SBCHECK_COLOR", "1")
        .output()
        .unwrap();
    assert!(stdout(&colored).contains("\x1b[32mtrue"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["adapt", s0().to_str().unwrap(), "--weak", "--strong"])), 2);
    assert_eq!(code(&run(&["adapt", s0().to_str().unwrap(), "--method", "psychic"])), 2);
}
