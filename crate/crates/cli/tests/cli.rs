use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use lmtp::simulation::{generate_dataset, oracle_theta_mc, BenchmarkDgp};
use lmtp::Policy;

fn lmtp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmtp"))
        .args(args)
        .env("LMTP_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Writes a simulated dataset and a configuration next to it.
fn setup(dir: &Path, n: usize, seed: u64, extra: Value) -> std::path::PathBuf {
    let data = generate_dataset(&BenchmarkDgp, n, seed).unwrap();
    data.write_csv(dir.join("data.csv")).unwrap();
    let mut cfg = json!({
        "data": "data.csv",
        "schema": data.schema(),
        "policy": {"type": "clamped_decrement"},
        "folds": 5,
        "seed": 11
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn saturated_learners() -> Value {
    json!({
        "learners": [{"kind": "saturated", "keys": ["A{t}", "L{t}_x", "A{t-1}"]}],
        "ratio_learners": [{"kind": "saturated", "keys": ["A{t}", "L{t}_x", "A{t-1}"], "prior": 5.0}]
    })
}

#[test]
fn identity_ipw_with_intercept_classifier_is_the_sample_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(
        dir.path(),
        300,
        3,
        json!({"policy": {"type": "identity"}, "ratio_learners": ["intercept_only"]}),
    );
    let out = dir.path().join("out.json");
    let run = lmtp(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--estimators",
        "ipw",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let theta = report["results"][0]["theta"].as_f64().unwrap();
    let ybar = generate_dataset(&BenchmarkDgp, 300, 3)
        .unwrap()
        .mean_outcome();
    assert_eq!(theta, ybar);
    assert_eq!(report["results"].as_array().unwrap().len(), 1);
}

#[test]
fn estimate_is_reproducible_and_writes_contrasts() {
    let dir = tempfile::tempdir().unwrap();
    let mut extra = saturated_learners();
    extra["reference_policy"] = json!({"type": "identity"});
    let cfg = setup(dir.path(), 400, 5, extra);
    let run = || {
        let r = lmtp(&["estimate", "--config", cfg.to_str().unwrap()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        r.stdout
    };
    let first = run();
    assert_eq!(first, run());
    let report: Value = serde_json::from_slice(&first).unwrap();
    let contrasts = report["contrasts"].as_array().unwrap();
    assert_eq!(contrasts.len(), 4);
    for (k, c) in contrasts.iter().enumerate() {
        let diff = report["results"][k]["theta"].as_f64().unwrap()
            - report["reference_results"][k]["theta"].as_f64().unwrap();
        assert!((c["difference"].as_f64().unwrap() - diff).abs() < 1e-15);
    }
    // interval estimators carry a differenced standard error
    assert!(contrasts[3]["se"].as_f64().unwrap() > 0.0);
    assert!(contrasts[0]["se"].is_null());
}

#[test]
fn sdr_covers_the_oracle_mean() {
    let dir = tempfile::tempdir().unwrap();
    let mut extra = saturated_learners();
    extra["folds"] = json!(10);
    let cfg = setup(dir.path(), 1800, 7, extra);
    let run = lmtp(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--estimators",
        "sdr",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    let theta = report["results"][0]["theta"].as_f64().unwrap();
    let se = report["results"][0]["se"].as_f64().unwrap();
    let oracle = oracle_theta_mc(&BenchmarkDgp, &Policy::clamped_decrement(), 1 << 21, 3).unwrap();
    assert!(
        (theta - oracle.theta).abs() <= 3.0 * se,
        "sdr {theta} (se {se}) vs oracle {}",
        oracle.theta
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 50, 1, json!({}));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"data": "data.csv", "unknown": 1}"#).unwrap();
    assert_eq!(
        lmtp(&["estimate", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lmtp(&[
            "estimate",
            "--config",
            cfg.to_str().unwrap(),
            "--estimators",
            "foo"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(lmtp(&["estimate"]).status.code(), Some(2));

    std::fs::remove_file(dir.path().join("data.csv")).unwrap();
    let missing = lmtp(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(!missing.stderr.is_empty());

    assert_eq!(
        lmtp(&["simulate", "--scenario", "5", "--reps", "2"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_writes_one_row_per_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let args = [
        "simulate",
        "--scenario",
        "1",
        "--n",
        "200",
        "--reps",
        "10",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    let run = lmtp(&args);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,estimator,n,reps,bias,sqrt_n_bias,n_mse_over_bound,coverage,rel_se,failures"
    );
    assert_eq!(lines.len(), 5);
    for (line, est) in lines[1..].iter().zip(["sub", "ipw", "tmle", "sdr"]) {
        assert!(line.starts_with(&format!("1,{est},200,10,")), "{line}");
    }
    assert!(lines[1].contains(",NA,NA,"));
    assert!(String::from_utf8_lossy(&run.stdout).contains("mc_se"));

    lmtp(&args);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
}
