use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn phasefield(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasefield"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_ok(out: &Path, args: &[&str]) -> Value {
    let o = phasefield(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn hermite_prints_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(dir.path(), &["hermite", "--n", "2", "--y=1,0"]);
    let c: Vec<f64> = serde_json::from_value(v["coefficients"].clone()).unwrap();
    assert_eq!(c, vec![1.0, 0.0, 0.0, 0.0]);

    let v = json_ok(dir.path(), &["hermite", "--n", "2", "--y=-1,0", "--kind", "zeta"]);
    let c: Vec<f64> = serde_json::from_value(v["coefficients"].clone()).unwrap();
    for (a, b) in c.iter().zip([-1.0, 0.0, 6.0, -4.0]) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn hermite_rejects_mismatched_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasefield(dir.path(), &["hermite", "--n", "3", "--y=1,0"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn profile_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(dir.path(), &["profile", "--n", "2", "--T", "6", "--points", "1201"]);
    let c0 = v["C_hat_0"].as_f64().unwrap();
    assert!((c0 - 2.0997).abs() < 1e-3, "{c0}");
    assert_eq!(v["C_hat_lam"].as_f64().unwrap(), c0);
    let f = phasefield::io::read_field_csv(v["profile_csv_path"].as_str().unwrap()).unwrap();
    assert_eq!(f.grid().len(), 1201);
}

#[test]
fn lambda_n_reports_positive_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(dir.path(), &["--seed", "3", "lambda-n", "--n", "2", "--starts", "4", "--points", "301"]);
    let l = v["lambda_hat"].as_f64().unwrap();
    assert!(l > 0.0 && l < 0.1, "{l}");
    assert!(Path::new(v["argmin_csv_path"].as_str().unwrap()).exists());
}

#[test]
fn check_ineq_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "9", "check-ineq", "--which", "intlem", "--count", "40", "--points", "201"];
    let a = json_ok(dir.path(), &args);
    let b = json_ok(dir.path(), &args);
    assert_eq!(a, b);
    assert_eq!(a["failures"], json!(0));
    assert_eq!(a["count"], json!(40));
}

#[test]
fn minimize_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "min.json",
        &json!({
            "n": 2, "epsilon": 0.0625, "lambda": 0.01, "a": -1.0, "b": 1.0,
            "init": {"kind": "layers", "jumps": [0.0], "left_value": -1.0},
            "mass": 0.0
        }),
    );
    let v = json_ok(dir.path(), &["minimize", &cfg]);
    assert!(v["breakdown"]["total"].as_f64().unwrap() <= v["initial_energy"].as_f64().unwrap());
    assert!(dir.path().join("minimizer.csv").exists());
    assert!(dir.path().join("minimize.json").exists());
}

#[test]
fn gamma_sweep_persists_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        &json!({
            "n": 2, "lambda": 0.01, "lambda_hat": 0.0569,
            "jumps": {"a": -1.0, "b": 1.0, "jumps": [0.0], "left_value": -1.0},
            "epsilons": [0.0625, 0.03125]
        }),
    );
    let v = json_ok(dir.path(), &["gamma-sweep", &cfg]);
    let record = v["record_path"].as_str().unwrap();
    assert!(Path::new(record).exists());
    let csv = std::fs::read_to_string(Path::new(record).with_extension("csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epsilon,E_min,E_recovery,jumps_detected,converged");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn supercritical_probe_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "probe.json",
        &json!({"n": 2, "lambdas": [0.0, 1.0, 4.0, 10.0], "epsilon": 0.0625}),
    );
    let v = json_ok(dir.path(), &["supercritical", &cfg]);
    assert_eq!(v["monotone"], json!(true));
    assert!(v["onset_lambda"].as_f64().is_some());
    assert!(dir.path().join("supercritical.json").exists());
}

#[test]
fn malformed_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({"n": 2}));
    let o = phasefield(dir.path(), &["minimize", &cfg]);
    assert!(!o.status.success());
}
