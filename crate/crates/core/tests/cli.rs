use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oscgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscgnn")).args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn simulate_critical_sl_reports_algebraic_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = oscgnn(&["simulate", "--system", "sl", "--params", "0,1,1,0", "--tmax", "20", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let analysis = read_json(&dir.path().join("analysis.json"));
    assert_eq!(analysis["decay"]["kind"], "algebraic");
    let rate = analysis["decay"]["rate"].as_f64().unwrap();
    assert!((rate + 0.5).abs() < 0.05, "{rate}");
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 100);
    assert!(dir.path().join("effective_config.json").exists());
    assert!(dir.path().join("run.log").exists());
}

#[test]
fn simulate_harmonic_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = oscgnn(&[
        "simulate", "--system", "harmonic", "--graph", "complete:2", "--params", "0,1", "--tmax", "50", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let drift = read_json(&dir.path().join("analysis.json"))["energy_drift"].as_f64().unwrap();
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn incompatible_solver_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = oscgnn(&["simulate", "--system", "kuramoto", "--solver", "imex", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["exit_code"], 2);
}

#[test]
fn unknown_and_out_of_range_keys_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for set in ["no_such_key=1", "lr=0.5", "dropout=0.9", "layers=0"] {
        let o = oscgnn(&["train", "--set", set, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{set}");
        assert!(stderr_json(&o)["message"].is_string());
    }
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = dir.path().join("absent");
    let o = oscgnn(&["eval", "--checkpoint", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn ttest_prints_the_score() {
    let o = oscgnn(&["ttest", "--mu1", "82.92", "--s1", "1.39", "--mu2", "82.35", "--s2", "1.61", "--n", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["t"].as_f64().unwrap() - 2.68).abs() < 0.02);
    assert_eq!(v["significant"], true);
}

#[test]
fn gradcheck_single_combination_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = oscgnn(&[
        "gradcheck", "--family", "slgnn", "--coupling", "gat", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("gradcheck.json").exists());
}

#[test]
fn train_is_reproducible_and_eval_reads_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{ "epochs": 20, "layers": 2, "hidden_dim": 8 }"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = oscgnn(&[
            "train", "--config", cfg.to_str().unwrap(), "-s", "dropout=0.1", "--seed", "3", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["metrics.json", "effective_config.json", "model/params.bin"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let echo = read_json(&a.join("effective_config.json"));
    assert_eq!(echo["config"]["epochs"], 20);
    assert_eq!(echo["config"]["dropout"], 0.1);
    assert_eq!(echo["config"]["seed"], 3);

    let eval_out = dir.path().join("eval");
    let o = oscgnn(&[
        "eval", "--config", cfg.to_str().unwrap(), "--seed", "3",
        "--checkpoint", a.join("model").to_str().unwrap(), "--out", eval_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_json(&eval_out.join("eval.json"));
    let metrics = read_json(&a.join("metrics.json"));
    assert_eq!(eval["test_metric"], metrics["test_metric"]);
}

#[test]
fn sweeps_write_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("depth");
    let o = oscgnn(&[
        "sweep-depth", "--depths", "1,2", "-s", "epochs=3", "-s", "hidden_dim=4", "--jobs", "2",
        "--out", depth.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(depth.join("depth.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("depth,val_metric,test_metric,epochs_run"));
    assert_eq!(csv.lines().count(), 3);

    let pert = dir.path().join("perturb");
    let o = oscgnn(&[
        "perturb", "--edges", "0,20", "--trials", "2", "-s", "epochs=3", "-s", "layers=1",
        "--out", pert.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(pert.join("robustness.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("level,mean,p25,p75"));
    assert_eq!(csv.lines().count(), 3);
}
