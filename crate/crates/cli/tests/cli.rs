use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ks-selfsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ks-selfsim-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn steady_to_stdout_is_csv() {
    let out = run(&["steady", "--out", "-"]);
    // the artifact is written even though the tail-frequency check misses its limit
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tail_omega_rel_error"));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,value,deriv"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(first[0] < 1e-3);
    assert!((first[1] - 1.0 / 6.0).abs() < 1e-6, "{first:?}");
}

#[test]
fn explicit_check_succeeds() {
    let dir = scratch("explicit");
    let out = run(&["verify-explicit", "--dim", "5", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("explicit.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "verify-explicit");
    assert_eq!(report["config"]["dim"], 5);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["steady", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["steady", "--dim", "2", "--out", "-"]).status.code(), Some(1));
    assert_eq!(run(&["steady", "--r0", "1.5", "--out", "-"]).status.code(), Some(1));
    assert_eq!(run(&["match", "--n", "0", "--out", "-"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn profile_writes_artifacts() {
    let dir = scratch("profile");
    let out = run(&["profile", "--dim", "3", "--n", "3", "--out", dir.to_str().unwrap()]);
    // the interior-metric trend check does not hold, so the run reports a failed verification
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("interior_metric_decreasing"));
    for n in 1..=3 {
        let csv = std::fs::read_to_string(dir.join(format!("profile_{n}.csv"))).unwrap();
        assert!(csv.starts_with("r,value,deriv\n"));
        assert!(csv.lines().count() > 100);
    }
    let mu = std::fs::read_to_string(dir.join("mu.csv")).unwrap();
    assert_eq!(mu.lines().count(), 4);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("profile.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().any(|c| c["metric"] == "u1_c1_gap" && c["pass"] == true));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn repeated_runs_are_identical() {
    let a = run(&["match", "--n", "2", "--out", "-"]);
    let b = run(&["match", "--n", "2", "--out", "-"]);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = scratch("config");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# test config\ndim = 4\nn=2\n").unwrap();
    let out_dir = dir.join("out");
    let out = run(&["verify-explicit", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("explicit.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["dim"], 4);
    assert_eq!(report["config"]["n"], 2);

    let out = run(&["verify-explicit", "--config", cfg.to_str().unwrap(), "--dim", "6", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("explicit.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["dim"], 6);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["verify-explicit", "--config", cfg.to_str().unwrap(), "--out", "-"]).status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&dir);
}
