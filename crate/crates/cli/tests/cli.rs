use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pbm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbm"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"{
    "dims": {"n": 4, "m": 2},
    "environment": {"kind": "stochastic", "alpha": [0.9, 0.7, 0.4, 0.2], "beta": [1.0, 0.5]},
    "horizon": 300, "replicates": 2, "base_seed": 3, "output_path": "out", "record_every": 100
}"#;

#[test]
fn presets_lists_all_names() {
    let dir = tempfile::tempdir().unwrap();
    let o = pbm(&["presets"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["synthetic_003", "synthetic_001", "yandex"] {
        assert!(text.contains(name), "{text}");
    }
    assert!(text.contains("alpha 0.95 0.92 0.89"), "{text}");
}

#[test]
fn run_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let o = pbm(&["run", "c.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("out/replicate_1.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "t,cum_regret,avg_reward,solver_converged,wall_ms");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("300,"));
    assert!(dir.path().join("out/summary.csv").exists());
}

#[test]
fn run_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let run = |args: &[&str]| {
        let o = pbm(args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run(&["run", "c.json", "--out", "a"]);
    run(&["run", "c.json", "--out", "b", "--seed", "4"]);
    run(&["run", "c.json", "--out", "c", "--route", "fw", "--fw-step", "pairwise"]);
    run(&["run", "c.json", "--out", "d", "--full-log"]);
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("replicate_0.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(read("d").lines().count(), 301);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(r#""n": 4, "m": 2"#, r#""n": 1, "m": 2"#);
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = pbm(&["run", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dims.m"), "{}", stderr(&o));

    let o = pbm(&["run", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = pbm(&["run", "bad.json", "--route", "simplex"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = pbm(&["check", "gap"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("PASS gap"), "{}", stdout(&o));

    let o = pbm(&["check", "decompose", "--seed", "5"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));

    let o = pbm(&["check", "solver-agree", "--fw-step", "pairwise"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));

    let o = pbm(&["check", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_check_exits_one() {
    // Open-loop Frank-Wolfe with K = 500 stays about 1e-3 away from the
    // projection on these instances.
    let dir = tempfile::tempdir().unwrap();
    let o = pbm(&["check", "solver-agree"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("FAIL solver-agree"));
}

#[test]
fn decompose_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("w.txt"), "3 3\n0.5 0.5 0\n0 0.5 0.5\n0.5 0 0.5\n").unwrap();
    let o = pbm(&["decompose", "w.txt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("2 terms"), "{text}");
    assert!(text.contains("max reconstruction error 0e0"), "{text}");

    // A non-square allocation is completed first.
    fs::write(dir.path().join("x.txt"), "3 1\n0.2\n0.3\n0.5\n").unwrap();
    let o = pbm(&["decompose", "x.txt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    fs::write(dir.path().join("bad.txt"), "2 2\n0.9 0.9\n0.1 0.1\n").unwrap();
    let o = pbm(&["decompose", "bad.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
