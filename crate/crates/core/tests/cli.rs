use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
    "regime": "increasing_domain",
    "kernel": {"family": "exponential"},
    "theta0": {"sigma2": 1.0, "alpha": 0.5},
    "n_list": [15, 30],
    "replicates": 3,
    "master_seed": 5
}"#;

fn gpmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmle"))
        .args(args)
        .env_remove("GPMLE_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let sim = dir.path().join("sim");
    let out = gpmle(&["simulate", "--config", &config, "--out", sim.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let design = std::fs::read_to_string(sim.join("design.csv")).unwrap();
    assert!(design.starts_with("x1\n"));
    assert_eq!(design.lines().count(), 31);

    let fit_dir = dir.path().join("fit");
    let out = gpmle(&[
        "fit",
        "--config",
        &config,
        "--design",
        sim.join("design.csv").to_str().unwrap(),
        "--data",
        sim.join("sample.csv").to_str().unwrap(),
        "--out",
        fit_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit_dir.join("fit.json")).unwrap()).unwrap();
    assert!(fit["sigma2_hat"].as_f64().unwrap() > 0.0);
    assert!(fit["alpha_hat"].as_f64().unwrap() >= 0.1);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["inputs"][0]["git_blob_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn experiment_writes_reports_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("run");
    let out_str = out_dir.to_str().unwrap();
    let out = gpmle(&["experiment", "--config", &config, "--out", out_str]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["perturb"], 0.2);
    assert_eq!(summary["config"]["workers"], 1);

    let again = gpmle(&["experiment", "--config", &config, "--out", out_str]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = gpmle(&["experiment", "--config", &config, "--out", out_str, "--force", "--set", "replicates=2"]);
    assert_eq!(forced.status.code(), Some(0));
    let records = std::fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 4);
}

#[test]
fn trend_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let eig = dir.path().join("eig");
    let out = gpmle(&["eigens", "--config", &config, "--out", eig.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let trends = std::fs::read_to_string(eig.join("trends.csv")).unwrap();
    assert_eq!(trends.lines().count(), 1 + 4);

    let var = dir.path().join("var");
    let out = gpmle(&["experiment", "varln_decay", "--config", &config, "--out", var.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(var.join("trends.csv")).unwrap().starts_with("n,var_ln,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("x");
    let out_str = out_dir.to_str().unwrap();

    assert_eq!(gpmle(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gpmle(&["experiment", "--out", out_str]).status.code(), Some(1));

    let bad = gpmle(&["experiment", "--config", &config, "--set", "bounds.alpha_range=[5,1]", "--out", out_str]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bounds.alpha_range"));

    let wrong = gpmle(&["experiment", "microergodic", "--config", &config, "--out", out_str, "--force"]);
    assert_eq!(wrong.status.code(), Some(1));

    let selftest = gpmle(&["selftest", "--out", dir.path().join("st").to_str().unwrap()]);
    assert_eq!(selftest.status.code(), Some(0));
    let text = String::from_utf8_lossy(&selftest.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");

    let help = gpmle(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("GPMLE_WORKERS"));
}
