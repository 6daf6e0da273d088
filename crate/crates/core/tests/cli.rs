use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ducct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ducct")).args(args).output().unwrap()
}

const FAST: [&str; 8] = [
    "--set",
    "mppi.rollouts=16",
    "--set",
    "risk.n_mc=100",
    "--set",
    "mppi.horizon=20",
    "--set",
    "limits.timeout=60",
];

#[test]
fn print_config_roundtrips() {
    let out = ducct(&["print-config", "--set", "mppi.rollouts=77", "--scenario", "c6p6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rollouts = 77"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(&path, &text).unwrap();
    let again = ducct(&["print-config", "--config", path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn config_errors_exit_with_code_2() {
    assert_eq!(ducct(&["print-config", "--set", "mppi.nonsense=1"]).status.code(), Some(2));
    assert_eq!(ducct(&["print-config", "--scenario", "c1p1x"]).status.code(), Some(2));
    assert_eq!(ducct(&["print-config", "--set", "mppi.sigma_cc=1.5"]).status.code(), Some(2));
    assert_eq!(ducct(&["print-config", "--controller", "greedy"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--scenario", "empty", "--seed", "4", "--out"];
    args.push(dir.path().to_str().unwrap());
    args.extend(FAST);
    let out = ducct(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stem = "empty_ducct_loc-standard_pred-standard_seed4";
    let csv = fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap();
    assert!(csv.starts_with("t,true_x,true_y,true_psi,est_x,est_y,est_psi,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{stem}.json"))).unwrap()).unwrap();
    assert_eq!(json["status"], "success");
    assert_eq!(json["config"]["mppi"]["rollouts"], 16);
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn batch_then_report_reproduces_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "batch",
        "--scenarios",
        "empty",
        "--controllers",
        "vanilla,ducct",
        "--runs",
        "2",
        "--out",
    ];
    args.push(dir.path().to_str().unwrap());
    args.extend(FAST);
    let out = ducct(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = read(&dir.path().join("aggregate.csv"));
    assert_eq!(agg.lines().count(), 3);
    assert_eq!(fs::read_dir(dir.path().join("runs")).unwrap().count(), 8);
    let long = read(&dir.path().join("long.csv"));
    assert!(long.starts_with("metric,scenario,variant"));

    let report = ducct(&["report", dir.path().to_str().unwrap()]);
    assert!(report.status.success());
    assert_eq!(read(&dir.path().join("aggregate.csv")), agg);

    let csv = dir.path().join("runs/empty_ducct_loc-standard_pred-standard_seed0.csv");
    let mut text = read(&csv);
    text.truncate(text.len() / 2);
    fs::write(&csv, text).unwrap();
    assert_ne!(ducct(&["report", dir.path().to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn verify_calibration_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = ducct(&[
        "verify-calibration",
        "--tracks",
        "50",
        "--episodes",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for label in ["localizer_standard", "localizer_over", "predictor_under"] {
        assert!(stdout.contains(label), "{label}");
    }
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("consistency.json"))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 6);
    assert!(read(&dir.path().join("nees_histograms.csv")).starts_with("sweep,bin_center,empirical,chi2_2"));
}

#[test]
fn bench_cycle_reports_latency() {
    let out = ducct(&["bench-cycle", "--peds", "4", "--reps", "2", "--set", "mppi.rollouts=16", "--set", "risk.n_mc=200"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("cycle median"));
}
