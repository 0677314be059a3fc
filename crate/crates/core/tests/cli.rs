mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vmcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmcf")).args(args).output().expect("spawn")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_arg(name: &str) -> String {
    common::repo_data(name).to_string_lossy().into_owned()
}

fn fit_vm(dir: &Path) -> PathBuf {
    let out = dir.join("vm.json");
    let res = vmcf(&["fit", "--data", &data_arg("melanoma.csv"), "--config", &data_arg("melanoma_vm.json"), "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    out
}

#[test]
fn fit_writes_json_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_vm(dir.path());
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["converged"], true);
    let table = std::fs::read_to_string(dir.path().join("vm.txt")).unwrap();
    assert!(table.contains("thickness"));
    assert!(table.contains("0.98 (0.2"), "{table}");
}

#[test]
fn unconverged_fit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vmcf.json");
    let res = vmcf(&["fit", "--data", &data_arg("melanoma.csv"), "--config", &data_arg("melanoma_vmcf.json"), "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(out.exists());
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["converged"], false);

    let mut cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(common::repo_data("melanoma_vm.json")).unwrap()).unwrap();
    cfg["model"]["em"] = serde_json::json!({"max_iter": 1});
    cfg["model"]["mode"] = serde_json::json!("vmcf");
    let cfg_path = dir.path().join("one.json");
    std::fs::write(&cfg_path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let res = vmcf(&["fit", "--data", &data_arg("melanoma.csv"), "--config", path_str(&cfg_path), "--out", path_str(&dir.path().join("one_fit.json"))]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let res = vmcf(&["fit", "--data", path_str(&dir.path().join("nope.csv")), "--config", &data_arg("melanoma_vm.json")]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!res.stderr.is_empty());
}

#[test]
fn predict_sorts_horizons_and_rejects_unknown_covariates() {
    let dir = tempfile::tempdir().unwrap();
    let fit = fit_vm(dir.path());
    let csv = dir.path().join("curves.csv");
    let res = vmcf(&["predict", "--fit", path_str(&fit), "--profile", &data_arg("melanoma_profile.json"), "--out", path_str(&csv)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let headers = reader.headers().unwrap().clone();
    let t_col = headers.iter().position(|h| h == "time").unwrap();
    let times: Vec<f64> = reader.records().map(|r| r.unwrap()[t_col].parse().unwrap()).collect();
    assert_eq!(times, vec![1.0, 2.0, 5.0, 7.0, 10.0, 15.0]);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"covariates": {"height": 1.8}}"#).unwrap();
    let res = vmcf(&["predict", "--fit", path_str(&fit), "--profile", path_str(&bad)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("height"));
}

#[test]
fn predict_with_data_adds_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let fit = fit_vm(dir.path());
    let csv = dir.path().join("curves.csv");
    let res = vmcf(&[
        "predict",
        "--fit",
        path_str(&fit),
        "--profile",
        &data_arg("melanoma_profile.json"),
        "--horizons",
        "5,1",
        "--data",
        &data_arg("melanoma.csv"),
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().contains("lower"), "{text}");
}

#[test]
fn bootstrap_rejects_zero_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let res = vmcf(&[
        "bootstrap",
        "--data",
        &data_arg("melanoma.csv"),
        "--config",
        &data_arg("melanoma_vm.json"),
        "-B",
        "0",
        "--out",
        path_str(&dir.path().join("b.json")),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("B must be positive"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    std::fs::write(
        &cfg,
        r#"{"n": 100, "beta0": -0.62, "beta1": 1.24, "gamma": 0.3, "baseline_rate": 0.4, "pi1": 0.25,
            "censor_low": 7, "censor_high": 15, "replications": 4, "seed": 11}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(format!("{name}.json"));
        let res = vmcf(&["--threads", threads, "simulate", "--config", path_str(&cfg), "--out", path_str(&out)]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        let tables: Vec<Vec<u8>> = (1..=3)
            .map(|k| std::fs::read(dir.path().join(format!("{name}_table{k}.csv"))).unwrap())
            .collect();
        outputs.push((std::fs::read(&out).unwrap(), tables));
    }
    assert_eq!(outputs[0], outputs[1]);

    std::fs::write(&cfg, r#"{"n": 100, "beta0": 0, "beta1": 0, "gamma": 0, "baseline_rate": 0.4, "pi1": 0.25, "censor_low": 7, "censor_high": 15, "replications": 0, "seed": 1}"#).unwrap();
    let res = vmcf(&["simulate", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("z.json"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("replications must be ≥ 1"));
}
