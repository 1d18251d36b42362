use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adactrl::harness::{ExperimentConfig, Summary};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn adactrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adactrl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

const SMALL: &str = r#"{
    "system": {"preset": "scalar_stable"},
    "noise": {"kind": "uniform_ball", "bound": 1.0},
    "horizon": 120,
    "cost": {"kind": "drifting_target_l1", "amplitude": 1.0, "period": 40.0},
    "algorithm": "alg1",
    "params": {"alpha_scale": 0.01, "memory": 2},
    "seed": 4
}"#;

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for out in ["a", "b"] {
        let o = adactrl(&["run", cfg.to_str().unwrap(), "--out", dir.path().join(out).to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["trace.csv", "regret.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(adactrl(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    assert!(adactrl(&["run", cfg.to_str().unwrap(), "--seed", "5", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
    let summary: Summary = serde_json::from_str(&fs::read_to_string(b.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.seed, 5);
}

#[test]
fn summary_counts_match_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = adactrl(&["run", repo_config("alg1_sanity.json").to_str().unwrap(), "--override", "horizon=300", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (epoch_col, switch_col) = (col("epoch"), col("switch"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 300);
    let epochs = rows.iter().map(|r| r[epoch_col].parse::<usize>().unwrap()).max().unwrap();
    let switches = rows.iter().filter(|r| r[switch_col] == "1" || r[switch_col] == "true").count();
    assert_eq!(summary.epochs, epochs);
    assert_eq!(summary.switches, switches);
    assert_eq!(summary.params_used["memory"], 4);
}

#[test]
fn short_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"horizon\": 120", "\"horizon\": 7"));
    let o = adactrl(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_json_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{ not json");
    assert_eq!(adactrl(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &SMALL.replace("\"seed\": 4", "\"seed\": 4, \"colour\": 1"));
    assert_eq!(adactrl(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unstable_plant_without_stabilizer_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("scalar_stable", "scalar_unstable"));
    let o = adactrl(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = adactrl(&[
        "run",
        cfg.to_str().unwrap(),
        "--override",
        "horizon=50",
        "--override",
        "params.memory=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 51);
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.params_used["memory"], 3);

    let loaded = ExperimentConfig::load_with_overrides(&cfg, &["params.memory=3".into()]).unwrap();
    assert_eq!(loaded.params.memory, Some(3));
    let bad = adactrl(&["run", cfg.to_str().unwrap(), "--override", "horizon"]);
    assert_eq!(bad.status.code(), Some(2));
}
