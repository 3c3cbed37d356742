use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn riskpoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskpoa")).args(args).output().expect("spawn riskpoa")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("riskpoa-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&riskpoa(&["verify-theorem6", "--m", "4"])), 1);
    assert_eq!(code(&riskpoa(&["learn", "--iters", "0"])), 1);
    assert_eq!(code(&riskpoa(&["no-such-command"])), 1);
    assert_eq!(code(&riskpoa(&["certify", "--lambda", "1", "--mu", "0", "--mu1", "1", "--mu2", "1"])), 1);
    assert_eq!(code(&riskpoa(&["certify", "--mu", "0"])), 1);
    assert_eq!(code(&riskpoa(&["learn", "--utility", "piecewise:0.5"])), 1);
    assert_eq!(code(&riskpoa(&["--help"])), 0);
}

#[test]
fn theorem6_m8_passes() {
    let out = riskpoa(&["verify-theorem6", "--m", "8"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["status"], "pass");
    let ratio = v["report"]["ratio_lower"].as_f64().unwrap();
    assert!((ratio - (4.0f64).ln() / 12.0).abs() < 1e-9, "{ratio}");
}

#[test]
fn certify_examples() {
    let out = riskpoa(&["certify", "--mechanism", "all-pay", "--deviation", "uniform", "--lambda", "0.5", "--mu", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["report"]["certified"], true);

    let out = riskpoa(&["certify", "--mechanism", "all-pay", "--deviation", "half-value", "--lambda", "1", "--mu", "0"]);
    assert_eq!(code(&out), 2);
    let cex = &json(&out)["report"]["counterexample"];
    assert!(cex["slack"].as_f64().unwrap() < 0.0);

    let out = riskpoa(&[
        "certify", "--mechanism", "second-price", "--deviation", "truthful", "--lambda", "1", "--mu1", "0", "--mu2", "1",
        "--grid", "0:1.5:16",
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn learn_is_deterministic() {
    let args = |out: &str, trace: &str| {
        riskpoa(&[
            "learn", "--mechanism", "first-price", "--values", "1,1", "--iters", "100000", "--seed", "7", "--out", out,
            "--trace", trace,
        ])
    };
    let (j1, c1, j2, c2) = (scratch("l1.json"), scratch("l1.csv"), scratch("l2.json"), scratch("l2.csv"));
    assert_eq!(code(&args(j1.to_str().unwrap(), c1.to_str().unwrap())), 0);
    assert_eq!(code(&args(j2.to_str().unwrap(), c2.to_str().unwrap())), 0);
    assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
    let csv = std::fs::read_to_string(&c1).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&c2).unwrap());
    assert!(!csv.contains('\r'));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "iteration,regret");
    assert!(csv.contains("# config_hash "));
}

#[test]
fn learn_uncertified_exits_3() {
    let out = riskpoa(&["learn", "--iters", "3", "--threshold", "0", "--values", "0.3,1"]);
    assert_eq!(code(&out), 3);
    let v = json(&out);
    assert_eq!(v["status"], "uncertified");
    assert_eq!(v["report"]["certified"], false);
}

#[test]
fn warm_start_reaches_zero_welfare() {
    let out = riskpoa(&[
        "learn", "--mechanism", "second-price", "--gamma", "1", "--values", "1,1", "--bids", "0:2:9", "--warm-start",
        "observation1", "--iters", "20000", "--seed", "3",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["report"]["max_regret"].as_f64().unwrap(), 0.0);
    assert!(v["report"]["welfare"].as_f64().unwrap().abs() < 0.02);
}

#[test]
fn config_file_and_flags() {
    let cfg = scratch("cfg.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "verify_two_item": {"gamma": 0.5}}"#).unwrap();
    let from_file = json(&riskpoa(&["--config", cfg.to_str().unwrap(), "verify-two-item"]));
    let from_flags = json(&riskpoa(&["verify-two-item", "--gamma", "0.5"]));
    assert_eq!(from_file["config_hash"], from_flags["config_hash"]);
    assert_eq!(from_file["report"]["ratio"], 1900.0);

    // flags win over the file
    let out = json(&riskpoa(&["--config", cfg.to_str().unwrap(), "verify-two-item", "--gamma", "1"]));
    assert_eq!(out["report"]["ratio"], 700.0);
    assert_ne!(out["config_hash"], from_file["config_hash"]);

    std::fs::write(&cfg, r#"{"schema_version": 1, "verify_two_item": {"gama": 0.5}}"#).unwrap();
    assert_eq!(code(&riskpoa(&["--config", cfg.to_str().unwrap(), "verify-two-item"])), 1);
    std::fs::write(&cfg, r#"{"schema_version": 2}"#).unwrap();
    assert_eq!(code(&riskpoa(&["--config", cfg.to_str().unwrap(), "verify-two-item"])), 1);
}

#[test]
fn outputs_carry_provenance() {
    let v = json(&riskpoa(&["verify-observation1"]));
    assert_eq!(v["tool"], "riskpoa");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["report"]["sw"], 0.0);
}

#[test]
fn poa_sweep_csv() {
    let args = ["poa-sweep", "--family", "all-pay", "--utility", "piecewise:2", "--n", "4", "--seed", "5", "--iters", "5000"];
    let a = riskpoa(&args);
    let b = riskpoa(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("instance_id,sw_eq,opt,opt_hat,ratio"));
    for row in lines {
        let ratio: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((1.0..=12.0).contains(&ratio), "{row}");
    }
}

#[test]
fn normalization_and_lemma1() {
    assert_eq!(code(&riskpoa(&["check-normalization", "--utility", "exponential"])), 0);
    let out = riskpoa(&["lemma1-test", "--n", "10", "--utility", "piecewise:4", "--seed", "2"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["report"]["failures"], 0);
    assert!(v["report"]["max_ratio"].as_f64().unwrap() <= 2.0 + 1e-9);
}
