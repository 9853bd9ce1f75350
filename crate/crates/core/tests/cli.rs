use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn contactlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contactlab"))
        .args(args)
        .env_remove("CONTACTLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    contactlab(args).status.code().expect("exit code")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn selfcheck_passes() {
    assert_eq!(code(&["selfcheck", "--seed", "42"]), 0);
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(code(&["couplings", "--mu", "2", "--mu", "3"]), 2);
    assert_eq!(code(&["breakpoints", "--lambda", "2", "--mu", "1"]), 2);
    assert_eq!(code(&["couplings", "--lambda", "2", "--mu", "1"]), 2);
    assert_eq!(code(&["simulate", "--horizon", "-1"]), 2);
    assert_eq!(code(&["simulate", "--config", "/nonexistent/config.json"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["speed", "--help"]), 0);
}

#[test]
fn replay_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let args = [
            "breakpoints",
            "--seed",
            "9",
            "--bp-replicas",
            "6",
            "--horizon",
            "120",
            "--survival-horizon",
            "30",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(code(&args), 0);
        read_dir_sorted(&out)
    };
    let a = run("a", "1");
    let b = run("b", "3");
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
}

#[test]
fn report_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let out = dir.path().join("out");
    fs::write(
        &config,
        format!(
            r#"{{"version": 1, "seed": 5, "replicas": 4, "horizon": 12.0, "t_eval": [0.0, 6.0, 12.0], "out": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let args = ["simulate", "--config", config.to_str().unwrap(), "--replicas", "3"];
    assert_eq!(code(&args), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["config"]["replicas"], 3);
    assert_eq!(report["config"]["horizon"], 12.0);
    assert_eq!(report["config"]["mu"], 2.0);
    assert!(report["config"].get("workers").is_none());
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("replica,t,r,l,infected_count,died\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn worker_env_overrides_file_but_not_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"version": 1, "workers": 2, "replicas": 2, "horizon": 5.0}"#).unwrap();
    let base = ["simulate", "--config", config.to_str().unwrap()];
    let bad_env = Command::new(env!("CARGO_BIN_EXE_contactlab"))
        .args(base)
        .env("CONTACTLAB_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
    let flag_wins = Command::new(env!("CARGO_BIN_EXE_contactlab"))
        .args(base)
        .args(["--workers", "1"])
        .env("CONTACTLAB_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(flag_wins.status.code(), Some(0));
}
