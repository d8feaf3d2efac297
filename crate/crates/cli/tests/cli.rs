use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfp")).current_dir(dir).args(args).output().expect("binary runs")
}

fn repo_config(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    fs::read_to_string(path).unwrap()
}

fn short_config(prefix: &str, t_end: f64) -> String {
    format!(
        r#"
schema_version = 1

[grid]
dim = 1
bounds = [[-1.0, 1.0]]
cells = [50]

[problem]
alpha = 2.0
lambda = 2.0
d = {{ kind = "constant", value = 1.0 }}
phi = {{ kind = "quadratic", lambda = 2.0 }}
rho0 = {{ kind = "gaussian-bump", amplitude = 1.0, width = 0.3, base = 0.5 }}

[solver]
t_end = {t_end}

[output]
prefix = "{prefix}"
"#
    )
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn equilibrium_constant_for_quadratic_potential() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("eq.toml"), short_config("eq", 1.0).replace("cells = [50]", "cells = [400]")).unwrap();
    let out = nfp(dir.path(), &["equilibrium", "eq.toml"]);
    assert_eq!(out.status.code(), Some(0));
    let c = json(&out)["C"].as_f64().unwrap();
    // midpoint rule on ∫x² leaves −h²/12
    let h: f64 = 2.0 / 400.0;
    assert!((c - (4.0 / 3.0 - h * h / 12.0)).abs() < 1e-12, "C = {c}");
}

#[test]
fn gronwall_without_superlinear_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out = nfp(dir.path(), &["gronwall", "--c7", "1", "--c8", "0", "--c9", "0", "--g0", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no finite threshold"), "{stderr}");
    assert!(stderr.contains("bound verified"), "{stderr}");
    assert_eq!(json(&out)["reports"][0]["bound_holds"], serde_json::Value::Bool(true));
}

#[test]
fn gronwall_above_threshold_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        nfp(dir.path(), &["gronwall", "--c7", "1", "--c8", "1", "--c9", "1", "--g0", "0.01", "10", "--t-end", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["reports"][0]["below_threshold"], serde_json::Value::Bool(true));
    assert_eq!(v["reports"][1]["below_threshold"], serde_json::Value::Bool(false));
}

#[test]
fn simulate_then_decay_fit_recovers_rate() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("baseline.toml"), repo_config("baseline.toml")).unwrap();
    let out = nfp(dir.path(), &["simulate", "baseline.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for suffix in ["diagnostics.csv", "summary.json", "config.toml"] {
        assert!(dir.path().join("out").join(format!("baseline_{suffix}")).exists());
    }
    let fit = nfp(dir.path(), &["decay-fit", "out/baseline_diagnostics.csv"]);
    assert_eq!(fit.status.code(), Some(0));
    let v = json(&fit);
    assert!(v["rate"].as_f64().unwrap() >= 0.9 * 2.0);
    assert!(v["r_squared"].as_f64().unwrap() >= 0.99);
}

#[test]
fn resolved_config_reparses_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), short_config("a", 0.05)).unwrap();
    assert_eq!(nfp(dir.path(), &["simulate", "a.toml"]).status.code(), Some(0));
    let resolved = fs::read_to_string(dir.path().join("a_config.toml")).unwrap();
    assert!(resolved.contains("dt_init"), "defaults are written out");
    fs::write(dir.path().join("b.toml"), resolved.replace("prefix = \"a\"", "prefix = \"b\"")).unwrap();
    assert_eq!(nfp(dir.path(), &["simulate", "b.toml"]).status.code(), Some(0));
    let a = fs::read(dir.path().join("a_diagnostics.csv")).unwrap();
    let b = fs::read(dir.path().join("b_diagnostics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parallel_sweep_matches_serial_runs() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["s1", "s2", "s3"];
    for (i, name) in names.iter().enumerate() {
        let text = short_config(name, 0.02).replace("width = 0.3", &format!("width = {}", 0.2 + 0.1 * i as f64));
        fs::write(dir.path().join(format!("{name}.toml")), text).unwrap();
    }
    let files: Vec<String> = names.iter().map(|n| format!("{n}.toml")).collect();
    let mut args = vec!["simulate", "--jobs", "3"];
    args.extend(files.iter().map(String::as_str));
    assert_eq!(nfp(dir.path(), &args).status.code(), Some(0));
    let parallel: Vec<Vec<u8>> =
        names.iter().map(|n| fs::read(dir.path().join(format!("{n}_diagnostics.csv"))).unwrap()).collect();
    for (name, bytes) in names.iter().zip(&parallel) {
        assert_eq!(nfp(dir.path(), &["simulate", &format!("{name}.toml")]).status.code(), Some(0));
        assert_eq!(&fs::read(dir.path().join(format!("{name}_diagnostics.csv"))).unwrap(), bytes);
    }
    assert_ne!(parallel[0], parallel[1]);
}

#[test]
fn shared_output_prefix_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), short_config("same", 0.01)).unwrap();
    fs::write(dir.path().join("b.toml"), short_config("same", 0.02)).unwrap();
    let out = nfp(dir.path(), &["simulate", "--jobs", "2", "a.toml", "b.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("same_diagnostics.csv").exists());
}

#[test]
fn unknown_key_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), short_config("bad", 0.01).replace("alpha = 2.0", "alpa = 2.0")).unwrap();
    let out = nfp(dir.path(), &["equilibrium", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpa"));
}

#[test]
fn validate_flags_hypothesis_violations() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.toml"), short_config("ok", 0.01)).unwrap();
    assert_eq!(nfp(dir.path(), &["validate", "ok.toml"]).status.code(), Some(0));
    // declared λ disagrees with the potential
    fs::write(dir.path().join("bad.toml"), short_config("bad", 0.01).replacen("lambda = 2.0", "lambda = 3.0", 1))
        .unwrap();
    let out = nfp(dir.path(), &["validate", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!json(&out)["warnings"].as_array().unwrap().is_empty());
    let run = nfp(dir.path(), &["validate", "--run", "ok.toml"]);
    assert_eq!(run.status.code(), Some(0));
    assert!(json(&run)["c2"].as_f64().unwrap() > 0.0);
}

#[test]
fn interp_check_passes_on_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        short_config("i", 0.01).replace("[[-1.0, 1.0]]", "[[0.0, 1.0]]") + "\n[interp]\ntrials = 300\nsamples = 200\n";
    fs::write(dir.path().join("i.toml"), text).unwrap();
    let out = nfp(dir.path(), &["interp-check", "i.toml", "-o", "report.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["interpolation"]["violations"], 0);
}

#[test]
fn identity_check_prints_first_order_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = short_config("id", 0.01) + "\n[analysis]\ndt_list = [4e-6, 2e-6]\nn_list = [50, 100]\n";
    fs::write(dir.path().join("id.toml"), text).unwrap();
    let out = nfp(dir.path(), &["identity-check", "id.toml", "-o", "study.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("study.json")).unwrap()).unwrap();
    let order = v["dt_orders"][0].as_f64().unwrap();
    assert!((0.8..=1.2).contains(&order), "order {order}");
}

#[test]
fn missing_csv_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nfp(dir.path(), &["decay-fit", "nope.csv"]).status.code(), Some(2));
}
