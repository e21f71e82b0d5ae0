//! Command-line behaviour: output formats, error exits and config precedence.

use std::process::{Command, Output};

fn fastica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastica")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_prints_a_summary_row() {
    let out = fastica(&["run", "--n", "2000", "--seed", "3", "--nl", "tanh"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iterations,halted_by,mode,deviation,matched_source,w1,w2");
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
}

#[test]
fn trace_has_one_row_per_iterate() {
    let out = fastica(&["run", "--n", "1000", "--seed", "1", "--w0", "1,1", "--trace"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "iter,w1,w2,delta");
    assert!(rows[1].starts_with("0,0.7071067811865475,0.7071067811865475,"));
    assert!(rows.len() >= 3);
}

#[test]
fn invalid_inputs_fail_with_a_message() {
    for args in [
        &["run", "--dist", "bogus"][..],
        &["run", "--nl", "cubic"],
        &["run", "--eps", "-1"],
        &["run", "--w0", "0,0"],
        &["run", "--n", "2"],
        &["classify", "--v", "1,0,0"],
    ] {
        let out = fastica(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("error"), "{args:?}: {err}");
    }
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nseed = 3\nn = 2000\nnl = tanh\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = stdout(&fastica(&["run", "--config", cfg]));
    let from_flags = stdout(&fastica(&["run", "--n", "2000", "--seed", "3", "--nl", "tanh"]));
    assert_eq!(from_file, from_flags);
    let overridden = stdout(&fastica(&["run", "--config", cfg, "--seed", "4"]));
    let expected = stdout(&fastica(&["run", "--n", "2000", "--seed", "4", "--nl", "tanh"]));
    assert_eq!(overridden, expected);
    assert_ne!(overridden, from_file);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "sede = 3\n").unwrap();
    let out = fastica(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn out_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    let out = fastica(&["scan", "--grid", "360", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() >= 2);
}

#[test]
fn summarize_reports_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    std::fs::write(&path, "cell,count,trials\na,0,10000\nb,25,100\n").unwrap();
    let out = fastica(&["summarize", "--input", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().ends_with("count,trials,rate,lower,upper,status"));
    assert_eq!(text.lines().count(), 3);
}
