use std::path::Path;
use std::process::{Command, Output};

fn bferl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bferl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn init_then_run_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let init = bferl(&["init", "--config", "s.cfg"], dir.path());
    assert_eq!(init.status.code(), Some(0), "{}", stderr(&init));
    let run = bferl(
        &[
            "run",
            "--config",
            "s.cfg",
            "--out",
            "events.tsv",
            "--metrics",
            "m.json",
            "--seed",
            "9",
        ],
        dir.path(),
    );
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let log = std::fs::read_to_string(dir.path().join("events.tsv")).unwrap();
    assert_eq!(log.lines().count(), 30);
    assert!(log.lines().all(|l| l.ends_with("\tValid")));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(metrics["encounters"], 30);
    assert_eq!(metrics["verdicts"]["Valid"], 30);
}

#[test]
fn same_seed_same_log() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.cfg"),
        "n_vehicles = 6\nn_rounds = 3\nseed = 5\nattack = ecu_reversal,2,1\nattack = sybil,4,2\n",
    )
    .unwrap();
    let a = bferl(&["run", "--config", "a.cfg"], dir.path());
    let b = bferl(&["run", "--config", "a.cfg"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bferl(&["run", "--config", "nope.cfg"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("nope.cfg"));

    std::fs::write(
        dir.path().join("bad.cfg"),
        "n_vehicles = 3\nattack = teleport,0,1\n",
    )
    .unwrap();
    let bad = bferl(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("line 2"), "{}", stderr(&bad));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = bferl(&["teleport"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    let none = bferl(&[], dir.path());
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn bench_merkle_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = bferl(
        &["bench-merkle", "--out", "m.csv", "--points", "10,100"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "ecus,mean_ms,stddev_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,"));
    assert_eq!(lines[2].split(',').count(), 3);
}

#[test]
fn bench_json_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let o = bferl(
        &[
            "bench-create",
            "--format",
            "json",
            "--points",
            "5,10",
            "--threads",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["vehicles"], 10);
    assert!(rows[1]["mean_ms"].as_f64().unwrap() > 0.0);

    let s = bferl(&["bench-storage", "--points", "100"], dir.path());
    let text = String::from_utf8(s.stdout).unwrap();
    assert!(text.starts_with("blocks,bytes,kind\n100,"));
    assert!(text.trim_end().ends_with(",projected"));

    let bad = bferl(&["bench-merkle", "--format", "xml"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
