use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn airvel(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airvel"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "duration = 2\n");
    let out = tmp.path().join("out");
    let res = airvel(&["simulate"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let trace = fs::read_to_string(out.join("trace_run000.csv")).unwrap();
    // header plus 401 ticks at 200 Hz
    assert_eq!(trace.lines().count(), 402);
}

#[test]
fn montecarlo_writes_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "duration = 6\nruns = 3\n");
    let out = tmp.path().join("mc");
    let res = airvel(&["montecarlo", "--seed", "9"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["summary.csv", "stats.csv", "trace_run000.csv", "trace_run001.csv", "trace_run002.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn observability_reports_the_reference_flight() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "duration = 12\n");
    let out = tmp.path().join("obs");
    let res = airvel(&["observability"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0));
    let table = fs::read_to_string(out.join("observability.csv")).unwrap();
    // windows start every 2 s while they fit in 12 s
    assert_eq!(table.lines().count(), 1 + 5);
}

#[test]
fn bad_configs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in ["runs = 0\n", "no_such_key = 1\n", "duration = \n", "rate_mag = 7\n"] {
        let cfg = write_config(tmp.path(), text);
        let res = airvel(&["montecarlo"], &cfg, &out);
        assert_eq!(res.status.code(), Some(2), "config {text:?}");
    }
    let missing = tmp.path().join("absent.cfg");
    let res = airvel(&["simulate"], &missing, &out);
    assert_ne!(res.status.code(), Some(0));
}
