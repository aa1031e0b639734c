mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqc2hls")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(name: &str) -> String {
    fixtures().join("c").join(name).display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bundle(dir: &Path) -> std::path::PathBuf {
    let k = dir.join("k");
    let o = run(&["extract", &fixture("toy_fft.c"), "--target", "fft16", "--kats", "100", "--out", s(&k)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pp = dir.join("pp");
    let o = run(&["preprocess", s(&k), "--out", s(&pp)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    pp.join("kernel")
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", &fixture("toy_fft.c")]);
    assert_eq!(code(&o), 3);
    let golden = std::fs::read_to_string(fixtures().join("golden/toy_fft.blockers.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);

    let clean = dir.path().join("clean.c");
    std::fs::write(&clean, "int f(void){return 0;}\n").unwrap();
    let o = run(&["analyze", s(&clean)]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());

    assert_eq!(code(&run(&["analyze", s(&dir.path().join("missing.c"))])), 2);
    let bad = dir.path().join("bad.c");
    std::fs::write(&bad, "int f(void) { return 0;\n").unwrap();
    assert_eq!(code(&run(&["analyze", s(&bad)])), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn extract_errors_and_empty_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["extract", &fixture("toy_fft.c"), "--target", "nope", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));

    let out = dir.path().join("empty");
    let o = run(&["extract", &fixture("ntt8.c"), "--target", "ntt8", "--kats", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(out.join("kernel.json").is_file());
}

#[test]
fn convert_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let k = bundle(dir.path());
    let c = dir.path().join("c");
    let o = run(&["convert", s(&k), "--runs", "3", "--out", s(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("fft16 | 100 | "));
    assert_eq!(std::fs::read_to_string(c.join("report.txt")).unwrap(), table);
    assert!(c.join("report.json").is_file());

    let r = run(&["report", s(&c)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(String::from_utf8(r.stdout).unwrap(), table);

    let t = c.join("attempts/attempt-002/transcript.json");
    let text = std::fs::read_to_string(&t).unwrap();
    std::fs::write(&t, text.replacen("\"compile_runs\": 1", "\"compile_runs\": 5", 1)).unwrap();
    let r = run(&["report", s(&c)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("attempt-002"));
}

#[test]
fn convert_rejects_zero_runs_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let k = bundle(dir.path());
    let out = dir.path().join("c");
    assert_eq!(code(&run(&["convert", s(&k), "--runs", "0", "--out", s(&out)])), 2);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[loop]\nmax_iteratons = 3\n").unwrap();
    let o = run(&["--config", s(&cfg), "convert", s(&k), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_iteratons"));
    assert_eq!(code(&run(&["convert", s(&dir.path().join("nothing")), "--out", s(&out)])), 2);
}

#[test]
fn report_on_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["report", s(dir.path())])), 2);
}

#[test]
fn dse_command_marks_best() {
    let dir = tempfile::tempdir().unwrap();
    let k = bundle(dir.path());
    let out = dir.path().join("d");
    let o = run(&["dse", s(&k), "--objective", "latency", "--budget", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().filter(|l| l.starts_with('*')).count(), 1);
    assert!(out.join("dse.json").is_file());
}
