use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oam_core::config::RunConfig;
use serde_json::Value;

const CFP: &str = r#"{
  "problem": {
    "d1": 2,
    "C": [{"type":"halfspace","a":[1,0],"beta":0},{"type":"halfspace","a":[0,1],"beta":0}],
    "F": {"type":"to_point","a":[1,1]}
  },
  "solver": {"variant":"product","maxIter":250},
  "output": {"tracePath":"trace.jsonl"}
}"#;

const SPLIT: &str = r#"{
  "problem": {
    "d1": 2,
    "A": [[2,0],[0,1]],
    "C": [{"type":"box","lo":[-1,-1],"hi":[0,0]}],
    "Q": [{"type":"halfspace","a":[1,0],"beta":0}],
    "F": {"type":"to_point","a":[1,-0.5]}
  },
  "solver": {"variant":"alternating","sigma":"tau","maxIter":2000}
}"#;

fn oam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_writes_one_trace_line_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfp.json", CFP);
    let out = oam(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 250);
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in [
        "k",
        "lambda_k",
        "stepNorm",
        "maxDistC",
        "maxDistQ",
        "distToRef",
        "tkResidual",
    ] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["iterations"], 250);
}

#[test]
fn summary_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "split.json", SPLIT);
    let out = oam(&["solve", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let echoed: RunConfig = serde_json::from_value(summary["config"].clone()).unwrap();
    assert_eq!(echoed, RunConfig::from_json(SPLIT).unwrap());
}

#[test]
fn identical_runs_give_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let text = SPLIT.replace(
        r#""maxIter":2000}"#,
        r#""maxIter":2000}, "output": {"tracePath":"t.csv","format":"csv","reference":true}"#,
    );
    let cfg = write(dir.path(), "split.json", &text);
    assert_eq!(
        oam(&["solve", cfg.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let first = std::fs::read(dir.path().join("t.csv")).unwrap();
    assert_eq!(
        oam(&["solve", cfg.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let second = std::fs::read(dir.path().join("t.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "k,lambda,step_norm,max_dist_c,max_dist_q,tk_residual,dist_to_ref"
    );
    assert_eq!(text.lines().count(), 2001);
}

#[test]
fn configuration_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            CFP.replace(r#""maxIter":250"#, r#""maxIter":250,"p":1.5"#),
            "p must lie in (0,1]",
        ),
        (
            SPLIT.replace("[[2,0],[0,1]]", "[[0,0],[0,0]]"),
            "Landweber requires nonzero A",
        ),
        (
            CFP.replace(r#""maxIter":250"#, r#""maxIter":250,"tolerance":1"#),
            "tolerance",
        ),
        (CFP.replace(r#""a":[1,1]"#, r#""a":[1,1,1]"#), "F.a"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let out = oam(&["solve", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "case {i}");
        assert!(stderr(&out).contains(needle), "case {i}: {}", stderr(&out));
    }
}

#[test]
fn check_passes_on_the_split_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "split.json", SPLIT);
    let out = oam(&["check", cfg.to_str().unwrap(), "--samples", "1000"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}{}",
        stdout(&out),
        stderr(&out)
    );
    let report = stdout(&out);
    for suite in [
        "cutter_tk",
        "sqne_blocks",
        "tau_at_least_one",
        "halfspace_contains",
        "landweber_fixset",
        "half_relaxation",
        "halfspace_formula",
    ] {
        assert!(
            report
                .lines()
                .any(|l| l.starts_with("PASS") && l.contains(suite)),
            "{suite}\n{report}"
        );
    }
}

#[test]
fn check_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "split.json", SPLIT);
    let out = oam(&["check", cfg.to_str().unwrap(), "--samples", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("samples must be positive"));

    // the product bound for two projections is 1/2
    let rho = write(
        dir.path(),
        "rho.json",
        &SPLIT.replace(
            r#""variant":"alternating""#,
            r#""variant":"product","rho":0.9"#,
        ),
    );
    let out = oam(&["check", rho.to_str().unwrap(), "--samples", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("solver.rho"), "{}", stderr(&out));
}

#[test]
fn oracle_prints_the_projection() {
    let dir = tempfile::tempdir().unwrap();
    for (text, expected) in [(CFP, [0.0, 0.0]), (SPLIT, [0.0, -0.5])] {
        let cfg = write(dir.path(), "c.json", text);
        let out = oam(&["oracle", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let p: Vec<f64> = serde_json::from_str(&stdout(&out)).unwrap();
        assert!(
            (p[0] - expected[0]).abs() <= 1e-9 && (p[1] - expected[1]).abs() <= 1e-9,
            "{p:?}"
        );
    }

    let affine = CFP.replace(
        r#"{"type":"to_point","a":[1,1]}"#,
        r#"{"type":"affine","M":[[1,0],[0,1]],"q":[0,0]}"#,
    );
    let cfg = write(dir.path(), "affine.json", &affine);
    assert_eq!(
        oam(&["oracle", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_config_is_a_configuration_error() {
    let out = oam(&["solve", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}
