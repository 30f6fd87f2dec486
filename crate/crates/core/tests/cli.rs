use std::path::Path;
use std::process::{Command, Output};

use profilelab::harness::{verify, ExperimentConfig, GateStatus, Suite, VerifyReport};
use profilelab::tree_sim::replay;
use profilelab::{preset_default, Execution};

fn profilelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_profilelab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

#[test]
fn grow_writes_profile_and_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let csv = dir.path().join("profile.csv");
    let out = profilelab(&[
        "grow", "--preset", "lopsided", "--nodes", "500", "--seed", "9",
        "--trace", trace.to_str().unwrap(), "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("l_1,count"));
    let total: u64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 501);

    let model = preset_default("lopsided").unwrap();
    let tr: profilelab::tree_sim::GrowthTrace = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    let tree = replay(&model, &tr).unwrap();
    assert_eq!(tree.profile().to_csv(1), text);

    let again = profilelab(&["grow", "--preset", "lopsided", "--nodes", "500", "--seed", "9"]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn grow_json_for_two_dimensions() {
    let out = profilelab(&["grow", "--preset", "combo2d", "--nodes", "50", "--seed", "1", "--format", "json"]);
    assert!(out.status.success());
    assert!(json(&out).is_object() || json(&out).is_array());
}

#[test]
fn range_reports_the_rrt_interval() {
    let out = profilelab(&["range", "--preset", "rrt"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["z0"].as_f64(), Some(0.0));
    assert!((v["z1"].as_f64().unwrap() - std::f64::consts::E).abs() < 1e-9);
    // theta is unbounded above for rrt.
    assert!(v["theta_interval"][1].is_null());
}

#[test]
fn normalize_c_and_l_modes() {
    let out = profilelab(&["normalize", "--preset", "bst", "--nodes", "1000", "--c", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("c,theta,l_n,log_A_c\n2,0,13,"));

    let out = profilelab(&["normalize", "--preset", "rrt", "--nodes", "1000", "--l", "5,7"]);
    assert_eq!(stdout(&out).lines().count(), 3);

    // Outside Lambda* is a domain error.
    let out = profilelab(&["normalize", "--preset", "bst", "--nodes", "1000", "--c", "5"]);
    assert_eq!(out.status.code(), Some(2));
    // Two coordinates per point for d = 2.
    let out = profilelab(&["normalize", "--preset", "combo2d", "--nodes", "1000", "--c", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixpoint_summary_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("pool.csv");
    let out = profilelab(&[
        "fixpoint", "--preset", "rrt", "--theta=-0.2", "--pool", "2000", "--iters", "5", "--seed", "3",
        "--samples", samples.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["mean"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert_eq!(v["divergent"].as_bool(), Some(false));
    let rows = std::fs::read_to_string(&samples).unwrap().lines().count();
    assert_eq!(rows, 2001);

    let small = profilelab(&["fixpoint", "--preset", "rrt", "--theta", "0.1", "--pool", "10", "--iters", "2", "--seed", "3"]);
    assert_eq!(small.status.code(), Some(2));
    let outside = profilelab(&["fixpoint", "--preset", "bst", "--theta", "3", "--pool", "1000", "--iters", "2", "--seed", "3"]);
    assert_eq!(outside.status.code(), Some(2));
}

#[test]
fn oracle_profile_and_martingale_check() {
    let out = profilelab(&["oracle", "--preset", "rrt", "--nodes", "3"]);
    assert!(out.status.success());
    // E U_1(3) for rrt is H_3 = 11/6.
    let row = stdout(&out).lines().find(|l| l.starts_with("1,")).unwrap().to_string();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 11.0 / 6.0).abs() < 1e-15);

    let out = profilelab(&["oracle", "--preset", "port", "--nodes", "4", "--martingale-check"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["pass"].as_bool(), Some(true));
    assert_eq!(v["grid_points"].as_u64(), Some(3));

    let huge = profilelab(&["oracle", "--preset", "bst", "--nodes", "40", "--martingale-check"]);
    assert_eq!(huge.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(profilelab(&["grow", "--preset", "nosuch", "--nodes", "3", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(profilelab(&["grow", "--preset", "bst"]).status.code(), Some(2));
    assert_eq!(profilelab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        profilelab(&["grow", "--preset", "port", "--param", "beta=1.5", "--nodes", "3", "--seed", "1"]).status.code(),
        Some(2)
    );
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn verify_fails_a_corrupted_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    // Children with different marginals.
    write(&model, r#"{"b": 2, "d": 1, "atoms": [{"p": 1.0, "w": [[0], [1]]}]}"#);
    let out = profilelab(&["verify", "--preset", model.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let report: VerifyReport = serde_json::from_slice(&out.stdout).unwrap();
    let gates = report.identity.unwrap().gates;
    assert_eq!((gates[0].name.as_str(), gates[0].status), ("validation", GateStatus::Fail));
    assert!(gates[1..].iter().all(|g| g.status == GateStatus::Skip));

    // Same for the convergence suite, which never runs on an invalid law.
    let out = profilelab(&["verify", "--preset", model.to_str().unwrap(), "--suite", "convergence", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let report: VerifyReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.convergence.is_none());

    // Unparseable files remain errors.
    write(&model, "{\"b\": 2");
    assert_eq!(profilelab(&["verify", "--preset", model.to_str().unwrap(), "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn verify_writes_report_file_matching_library() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let cfg_path = dir.path().join("cfg.json");
    let cfg_text = format!(
        r#"{{"format": "json", "output": {:?}, "n": [2000, 8000], "reps": 12,
            "c_grid": [0.6, 1.5], "pool": {{"size": 5000, "iterations": 6}}}}"#,
        report.to_str().unwrap()
    );
    write(&cfg_path, &cfg_text);
    let out = profilelab(&[
        "verify", "--preset", "rrt", "--suite", "convergence", "--seed", "4", "--config", cfg_path.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    // The gate table goes to stderr when the report goes to a file.
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("suite,gate,hard,status"));

    let from_cli: VerifyReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut cfg = ExperimentConfig::from_json_str(&cfg_text).unwrap();
    cfg.preset = "rrt".into();
    cfg.seed = 4;
    let model = cfg.model().unwrap();
    let direct = verify(&model, &cfg, Suite::Convergence, Execution::Sequential).unwrap();
    assert_eq!(from_cli, direct);
    let conv = direct.convergence.unwrap();
    assert_eq!(conv.points.len(), 4);
    assert_eq!(out.status.code() == Some(0), direct_all_hard(&conv.gates));
}

fn direct_all_hard(gates: &[profilelab::harness::Gate]) -> bool {
    !gates.iter().any(|g| g.hard_failure())
}
