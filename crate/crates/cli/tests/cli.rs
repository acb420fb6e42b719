use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sway")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = sway(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, jobs: &str) {
    ok(&[
        "simulate", "--seed", "7", "--out", p(dir), "--participants", "16", "--sessions", "2", "--duration", "10",
        "--sample-rate", "20", "--label-noise", "0.1", "--jobs", jobs,
    ]);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn simulate_then_evaluate_gives_sixteen_folds() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("eval");
    simulate(&data, "1");
    ok(&["evaluate", "--in", p(&data), "--out", p(&out), "--grid", "1e-2..1", "--three-class", "--mode", "map-predictions"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let folds = report["folds"].as_array().unwrap().len() + report["skipped"].as_array().unwrap().len();
    assert_eq!(folds, 16);
    assert!(out.join("report_three_class.json").exists());
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("Five-level") && text.contains("Three-level"));

    let rendered = sway(&["report", "--in", p(&out.join("report.json"))]);
    assert!(rendered.status.success());
    assert!(!rendered.stdout.is_empty());
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent");
    let out = sway(&["extract", "--in", p(&missing), "--out", p(&tmp.path().join("f.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error kind=data message="), "{stderr}");
    assert_eq!(stderr.lines().count(), 1);

    let out = sway(&["evaluate", "--in", p(tmp.path()), "--out", p(tmp.path()), "--grid", "3..30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=usage"));
    assert_eq!(sway(&["simulate", "--seed", "1", "--out", p(tmp.path()), "--label-noise", "2"]).status.code(), Some(1));
    assert_eq!(sway(&["--jobs", "0", "simulate", "--seed", "1", "--out", p(tmp.path())]).status.code(), Some(1));
    assert_eq!(sway(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sway(&["--help"]).status.code(), Some(0));
}

#[test]
fn extract_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "1");
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    ok(&["extract", "--in", p(&data), "--out", p(&a)]);
    ok(&["extract", "--in", p(&data.join("manifest.toml")), "--out", p(&b)]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 16 * 2 * 2 + 1);
    assert_eq!(text.lines().next().unwrap().split(',').filter(|h| h.ends_with("_mean")).count(), 10);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for jobs in ["1", "2"] {
        let root = tmp.path().join(format!("jobs{jobs}"));
        let data = root.join("data");
        simulate(&data, jobs);
        ok(&["extract", "--in", p(&data), "--out", p(&root.join("features.csv")), "--jobs", jobs]);
        ok(&["evaluate", "--in", p(&data), "--out", p(&root.join("eval")), "--grid", "1e-2..1", "--jobs", jobs]);
        ok(&["train", "--in", p(&data), "--out", p(&root.join("model.json")), "--c", "0.1", "--jobs", jobs]);
        runs.push(read_all(&root));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}
