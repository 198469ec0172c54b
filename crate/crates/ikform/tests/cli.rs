//! End-to-end checks of the command-line binary.

use ikform::bench::parse_csv;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ikform"))
}

#[test]
fn bench_stdout_is_a_parsable_table() {
    let out = bin()
        .args(["bench", "2d", "--n", "4", "--targets", "5", "--seed", "11"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let records = parse_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(records.len(), 15);
    assert!(records.iter().all(|r| r.experiment == "2d-scaling"));
}

#[test]
fn solve_reports_a_verified_solution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.json");
    std::fs::write(
        &path,
        r#"{
            "robot": {"planar": {"n": 5}},
            "target": {"pose2": {"x": 0.3, "y": 0.2, "theta": 0.5}},
            "cost": {}
        }"#,
    )
    .unwrap();
    for method in ["old", "new", "sampling"] {
        let out = bin()
            .args(["solve", "--method", method, "--problem"])
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{method} run failed");
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["method"], method);
        assert_eq!(report["status"], "solved", "{method} did not solve");
        let viol = report["max_violation"].as_f64().unwrap();
        assert!(viol <= 1e-8, "{method} violation {viol}");
        assert_eq!(report["q"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn missing_problem_file_fails_with_the_path() {
    let out = bin()
        .args([
            "solve",
            "--method",
            "old",
            "--problem",
            "/nonexistent/p.json",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/p.json"), "stderr: {err}");
}

#[test]
fn gradient_check_passes() {
    let out = bin()
        .args(["check", "gradients", "--points", "25"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches(" ok").count(), 4, "stdout: {text}");
    assert!(!text.contains("FAIL"));
}
