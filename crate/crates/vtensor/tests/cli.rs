//! End-to-end checks of the `vtensor` binary.

use std::process::{Command, Output};

use serde_json::Value;

fn vtensor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtensor")).args(args).output().expect("binary runs")
}

#[test]
fn json_reports_are_byte_identical_across_runs() {
    let args = ["--suite", "delta-calculus,prop-13-3", "--seed", "3"];
    let a = vtensor(&args);
    let b = vtensor(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["schema"], "vtensor-report/1");
    assert_eq!(doc["config"]["seed"], 3);
    assert_eq!(doc["config"]["M"], 16);
    assert_eq!(doc["summary"]["total"], 6);
    assert_eq!(doc["summary"]["pass"], 6);
    assert_eq!(doc["summary"]["warning"], false);
    for r in doc["reports"].as_array().unwrap() {
        assert!(r.get("wall_time").is_none());
        assert!(!r["anchor"].as_str().unwrap().is_empty());
        assert_eq!(r["verdict"], "PASS");
    }
}

#[test]
fn text_format_and_output_file() {
    let path = std::env::temp_dir().join(format!("vtensor-cli-{}.txt", std::process::id()));
    let out = vtensor(&["--suite", "delta-calculus", "--format", "text", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().take(3).all(|l| l.starts_with("[PASS] delta-calculus/")));
    assert!(text.ends_with("total 3 | pass 3 | window-limited 0 | fail 0 | ill-defined 0\n"));
}

#[test]
fn corrupted_map_fails_with_witness_and_nonzero_exit() {
    let out = vtensor(&["--suite", "intertwining-P", "--inject-corruption", "--branch-p", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let bad: Vec<&Value> = doc["reports"].as_array().unwrap().iter().filter(|r| r["verdict"] == "FAIL").collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0]["case"], "corrupted-table");
    assert!(!bad[0]["witness"].is_null());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupted-table"));
}

#[test]
fn window_limited_results_warn_but_exit_zero() {
    let out = vtensor(&["--suite", "hboxtr-membership", "--branch-p", "0", "--grade", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["summary"]["warning"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("window-limited"));
}

#[test]
fn configuration_errors_exit_two() {
    for args in [
        vec!["--suite", "no-such-suite"],
        vec!["--cyclotomic-order", "20"],
        vec!["--momentum-denominator", "0"],
    ] {
        let out = vtensor(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn other_denominators_pick_their_own_field() {
    let out = vtensor(&["--suite", "delta-calculus", "--momentum-denominator", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((doc["config"]["N"].as_i64(), doc["config"]["M"].as_i64()), (Some(9), Some(36)));
}
