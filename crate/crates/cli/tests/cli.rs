use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade-bai")).args(args).env("RUST_BACKTRACE", "0").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn trials_csv_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let base = ["trials", "--linspace", "0.9,0.3,8", "--K", "2", "--n", "12", "--seed", "5"];
    ok(&[&base[..], &["--jobs", "1", "--out", a.to_str().unwrap()]].concat());
    ok(&[&base[..], &["--jobs", "8", "--out", b.to_str().unwrap()]].concat());
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 13);
}

#[test]
fn run_prints_json() {
    let out = ok(&["run", "--weights", "1,0", "--K", "1", "--seed", "3"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["recommended"], serde_json::json!([0]));
    assert_eq!(v["success"], true);
}

#[test]
fn batrac_run() {
    let out = ok(&["run", "--two-prob", "0.8,0.2,5", "--K", "2", "--algo", "batrac", "--b", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["algorithm"], "batrac(1)");
    assert_eq!(v["steps"], v["total_observations"]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "K = 2\nlinspace = [0.9, 0.2, 6]\nn = 3\nseed = 1\n").unwrap();
    let from_file = ok(&["trials", "--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file.lines().count(), 4);
    let overridden = ok(&["trials", "--config", cfg.to_str().unwrap(), "--n", "5"]);
    assert_eq!(overridden.lines().count(), 6);
    assert!(overridden.starts_with(&from_file));
}

#[test]
fn bounds_json() {
    let out = ok(&["bounds", "--weights", "0.9,0.5,0.3", "--K", "1"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["sorted_thresholds"], serde_json::json!([3809, 8672, 8672]));
    assert!(v["lower_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.csv");
    fs::write(&path, "K,mean_steps\n2,13\n4,19\n8,31\n").unwrap();
    let out = ok(&["fit", "--model", "linear", "--in", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["c1"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!((v["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    fs::write(&path, "K,mean_steps\n2,13\n4,19\n").unwrap();
    assert!(!bin(&["fit", "--in", path.to_str().unwrap()]).status.success());
}

#[test]
fn ordering_experiment_rows() {
    let out = ok(&["experiment", "--name", "ordering", "--n", "1", "--max-steps", "500", "--jobs", "1"]);
    assert_eq!(out.lines().count(), 8);
    assert!(out.lines().next().unwrap().starts_with("experiment,family,algorithm,ordering,L,K"));
}

#[test]
fn bad_input_fails() {
    assert!(!bin(&["run", "--K", "2"]).status.success());
    assert!(!bin(&["run", "--two-prob", "0.5,0.2", "--K", "2"]).status.success());
    assert!(!bin(&["run", "--weights", "0.5,1.2", "--K", "1"]).status.success());
    assert!(!bin(&["run", "--weights", "0.5,0.2", "--K", "1", "--order", "sideways"]).status.success());
}
