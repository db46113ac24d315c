//! End-to-end checks of the `rinkreg` binary: exit codes and the full
//! rinkgen → synth → register → eval pipeline.

use std::path::Path;
use std::process::{Command, Output};

fn rinkreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rinkreg"))
        .args(args)
        .output()
        .expect("spawn rinkreg")
}

#[test]
fn help_exits_zero() {
    let out = rinkreg(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    for args in [&["--bogus-flag"][..], &[][..], &["rinkgen"][..]] {
        let out = rinkreg(args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
    }
}

#[test]
fn malformed_input_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    std::fs::write(&manifest, "this is not json\n").unwrap();
    let preds = dir.path().join("predictions.jsonl");
    std::fs::write(&preds, "").unwrap();
    let out = rinkreg(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_prediction_exits_two_and_names_the_id() {
    let dir = tempfile::tempdir().unwrap();
    let specs = dir.path().join("specs");
    let data = dir.path().join("data");
    run_ok(&["rinkgen", "--n", "1", "--seed", "4", "--out", p(&specs)]);
    run_ok(&[
        "synth",
        "--specs",
        p(&specs),
        "--out",
        p(&data),
        "--n-per-spec",
        "2",
        "--seed",
        "4",
    ]);
    // predictions covering nothing at all
    let preds = dir.path().join("predictions.jsonl");
    std::fs::write(&preds, "").unwrap();
    let out = rinkreg(&[
        "eval",
        "--manifest",
        p(&data.join("manifest.jsonl")),
        "--predictions",
        p(&preds),
        "--out",
        p(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("s00000"), "stderr: {err}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = rinkreg(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "args {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let specs = dir.path().join("specs");
    let data = dir.path().join("data");
    let reg = dir.path().join("reg");
    let eval = dir.path().join("eval");

    run_ok(&["rinkgen", "--n", "1", "--seed", "9", "--out", p(&specs)]);
    run_ok(&[
        "synth",
        "--specs",
        p(&specs),
        "--out",
        p(&data),
        "--n-per-spec",
        "1",
        "--seed",
        "9",
    ]);
    run_ok(&[
        "register",
        "--manifest",
        p(&data.join("manifest.jsonl")),
        "--out",
        p(&reg),
        "--iters",
        "1",
        "--overlay",
    ]);
    assert!(reg.join("predictions.jsonl").exists());
    assert!(reg.join("overlay_s00000.png").exists());

    let out = rinkreg(&[
        "eval",
        "--manifest",
        p(&data.join("manifest.jsonl")),
        "--predictions",
        p(&reg.join("predictions.jsonl")),
        "--out",
        p(&eval),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("mean"), "stdout: {table}");
    assert!(eval.join("report.json").exists());
    assert!(eval.join("report.txt").exists());
}
