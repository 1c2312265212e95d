use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn survint(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survint"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SURVINT_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// `coalition -> mean` from an explain summary.
fn summary_means(path: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_writes_dataset_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(&["simulate", "--scenario", "1", "--n", "1000", "--seed", "7", "--split"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    assert_eq!(csv.lines().next(), Some("x1,x2,x3,time,event"));
    let meta = read_json(&dir.path().join("metadata.json"));
    let rate = meta["censoring_rate"].as_f64().unwrap();
    assert!(rate > 0.0 && rate < 1.0);
    assert_eq!(fs::read_to_string(dir.path().join("train.csv")).unwrap().lines().count(), 801);
    assert_eq!(fs::read_to_string(dir.path().join("test.csv")).unwrap().lines().count(), 201);
    let manifest = read_json(&dir.path().join("run-manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn simulate_records_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(&["simulate", "--rho", "0.9", "--n", "50"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&dir.path().join("metadata.json"))["rho"], 0.9);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(&["simulate", "--scenario", "11"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("data.csv").exists());
}

#[test]
fn bad_flag_values_fail_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--rho", "1.5"][..],
        &["explain", "--timepoints", "1"],
        &["explain", "--method", "kernelshap"],
        &["explain", "--instance", "5000", "--n", "20"],
        &["explain", "--instance", "1,2", "--n", "20"],
        &["explain", "--method", "regression", "--budget", "4", "--n", "20"],
        &["benchmark", "--features", "6", "--budgets", "128"],
        &["benchmark", "--features", "17"],
        &["validate", "--only", "thm9"],
    ] {
        let o = survint(args, dir.path());
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn explain_reference_instance_matches_reference_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(
        &[
            "explain",
            "--scenario",
            "1",
            "--instance",
            "-1.2650,2.4162,-0.6436",
            "--order",
            "2",
            "--target",
            "loghazard",
            "--svg",
            "--smooth",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let means = summary_means(&dir.path().join("summary.csv"));
    let reference = [("1", -0.5167), ("2", -1.9), ("3", 0.375)];
    for (c, r) in reference {
        let m = means.iter().find(|(k, _)| k == c).unwrap().1;
        assert!((m - r).abs() < 0.1, "{c}: {m} vs {r}");
    }
    for (c, m) in &means {
        if c.contains('+') {
            assert!(m.abs() < 0.05);
        }
    }
    for f in [
        "explanation.csv",
        "explanation.json",
        "explanation-smoothed.csv",
        "explanation.svg",
        "explanation-smoothed.svg",
        "diagnostics.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("explanation.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 6);
}

#[test]
fn regression_on_nine_features_reports_rank() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(
        &["explain", "--features", "9", "--method", "regression", "--budget", "512", "--n", "100"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&dir.path().join("diagnostics.json"));
    assert_eq!(d["rank"], 46 - 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("design rank"));
}

#[test]
fn order_one_differs_from_order_two_main_effects() {
    let dir = tempfile::tempdir().unwrap();
    let run = |k: &str| {
        let sub = dir.path().join(k);
        let o = survint(&["explain", "--scenario", "3", "--order", k, "--instance", "4", "--n", "200"], &sub);
        assert_eq!(code(&o), 0);
        summary_means(&sub.join("summary.csv"))
    };
    let one = run("1");
    let two = run("2");
    assert_eq!(one.len(), 3);
    let gap = (0..3).map(|i| (one[i].1 - two[i].1).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-6, "gap {gap}");
}

#[test]
fn cox_explanation_from_data_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&survint(&["simulate", "--n", "300"], &dir.path().join("sim"))), 0);
    let data = dir.path().join("sim/data.csv");
    let o = survint(
        &["explain", "--data", data.to_str().unwrap(), "--model", "cox", "--instance", "3", "--timepoints", "11"],
        &dir.path().join("ex"),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e = read_json(&dir.path().join("ex/explanation.json"));
    assert_eq!(e["target"], "survival");
}

#[test]
fn validate_thm5_has_two_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(&["validate", "--only", "thm5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let checks = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert_eq!(checks.lines().count(), 3);
    assert!(checks.contains("marginal-x3-zero") && checks.contains("conditional-x3-nonzero"));
}

#[test]
fn zero_tolerance_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = survint(&["validate", "--only", "thm5,thm1", "--tolerance-scale", "0"], dir.path());
    assert_eq!(code(&o), 3);
    let checks = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert!(checks.contains(",false,"));
    assert!(dir.path().join("run-manifest.json").exists());
}

#[test]
fn benchmark_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "benchmark",
        "--features",
        "6",
        "--order",
        "2",
        "--budgets",
        "24,48",
        "--runs",
        "3",
        "--background",
        "30",
        "--timepoints",
        "6",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&survint(&args, &a)), 0);
    assert_eq!(code(&survint(&args, &b)), 0);
    let csv = fs::read(a.join("benchmark.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("benchmark.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("method,budget,run,mse"));
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 3);
}

#[test]
fn flags_override_config_file_and_manifest_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"order": 1, "n": 60, "timepoints": 9, "instance": 2, "scenario": "5"}"#).unwrap();
    let first = dir.path().join("first");
    let o = survint(&["explain", "--config", config.to_str().unwrap(), "--order", "2"], &first);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&first.join("run-manifest.json"));
    assert_eq!(m["order"], 2);
    assert_eq!(m["n"], 60);
    assert_eq!(m["scenario"], "5");

    let second = dir.path().join("second");
    let manifest = first.join("run-manifest.json");
    let o = survint(&["explain", "--config", manifest.to_str().unwrap()], &second);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(first.join("explanation.csv")).unwrap(),
        fs::read(second.join("explanation.csv")).unwrap()
    );
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_survint"))
        .args(["--threads", "1", "simulate", "--n", "20"])
        .env("SURVINT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("data.csv").exists());
    assert_eq!(read_json(&dir.path().join("run-manifest.json"))["threads"], 1);
}

#[test]
fn help_exits_cleanly() {
    let o = Command::new(env!("CARGO_BIN_EXE_survint")).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("benchmark"));
}
