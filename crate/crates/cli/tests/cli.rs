//! End-to-end command tests through the compiled binary: exit codes, JSON
//! output shapes, artifact files, and rerun determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn acmx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acmx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("bad JSON ({e}): {text}"))
}

fn sphere_config(dir: &Path, epsilons: &str) -> String {
    format!(
        r#"
schema_version = 1

[potential]
kind = "quartic"

[surface]
kind = "sphere"
radius = 1.0

[schedule]
epsilons = {epsilons}

[minmax]
nodes = 17
seed = 3

[spectrum]
modes = 6
zero_tol = 5e-3
seed = 5

[output]
dir = "{}"
"#,
        dir.display()
    )
}

#[test]
fn potential_check_reports_the_interface_constants() {
    let out = acmx(&["potential-check"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let sigma = v["constants"]["sigma"].as_f64().unwrap();
    assert!((sigma - 2.0 * 2.0_f64.sqrt() / 3.0).abs() <= 1e-8);
    assert_eq!(v["validation"]["pass"], serde_json::Value::Bool(true));
}

#[test]
fn heteroclinic_writes_the_profile_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("profile.csv");
    let out = acmx(&["heteroclinic", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["sigma"].as_f64().unwrap() - 0.9428090415820634).abs() <= 1e-9);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,value,derivative"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 3);
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, sphere_config(tmp.path(), "[]")).unwrap();
    let out = acmx(&["report", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = acmx(&["minmax", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_passes_gates_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, sphere_config(&run_dir, "[0.35, 0.17]")).unwrap();

    let out = acmx(&["report", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert_eq!(out.status.code(), Some(0), "stdout: {text}");
    assert!(text.contains("[PASS] residual"), "stdout: {text}");
    assert!(!text.contains("[FAIL]"), "stdout: {text}");

    let report_path = run_dir.join("report.json");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["schema_version"], serde_json::json!(1));
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
    assert!(report["provenance"]["config_hash"].as_str().unwrap().len() == 16);

    let first = fs::read(&report_path).unwrap();
    let out = acmx(&["report", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(first, fs::read(&report_path).unwrap());
}

#[test]
fn minmax_field_feeds_levelset_index_and_density() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, sphere_config(&run_dir, "[0.35]")).unwrap();
    let cfg_s = cfg.to_str().unwrap();

    let out = acmx(&["minmax", "--config", cfg_s]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
    let field = v["field_file"].as_str().unwrap().to_string();

    let curves_csv = tmp.path().join("curves.csv");
    let out = acmx(&[
        "levelset", "--config", cfg_s, "--field", &field, "--epsilon", "0.35",
        "--out", curves_csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    // The zero set of a sphere band is one closed curve near a great circle.
    let len = v["total_length"].as_f64().unwrap();
    assert!(len > 5.5 && len < 7.5, "length {len}");
    assert!(curves_csv.is_file());

    let out = acmx(&["index", "--config", cfg_s, "--field", &field, "--epsilon", "0.35"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["index"], serde_json::json!(1), "summary: {v}");

    let out = acmx(&[
        "density", "--config", cfg_s, "--field", &field, "--epsilon", "0.35",
        "--center", "0", "--radii", "0.5,1.0",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn entire_refines_a_two_end_state() {
    let tmp = tempfile::tempdir().unwrap();
    let out = acmx(&[
        "entire", "--angles", "0,3.141592653589793", "--offsets", "0,0",
        "--box", "6.5", "--h", "0.5", "--out-dir", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["k"], serde_json::json!(1));
    assert_eq!(v["balanced"], serde_json::Value::Bool(true));
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
    assert!(tmp.path().join("entire_field.csv").is_file());

    // Mismatched lengths are a usage error.
    let out = acmx(&[
        "entire", "--angles", "0,3.14", "--offsets", "0",
        "--box", "6.5", "--h", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
