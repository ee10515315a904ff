//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! and byte reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn theories() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../theories")
}

fn logikon(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logikon"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_distrib_data(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let mut rows = String::new();
    for v in 0..8u32 {
        let a = v & 1;
        let b = (v >> 1) & 1;
        let c = (v >> 2) & 1;
        let target = if a == 1 && (b == 1 || c == 1) { 1 } else { 0 };
        rows.push_str(&format!("{a},{b},{c},{target}\n"));
    }
    std::fs::write(&path, rows).unwrap();
    path
}

#[test]
fn compile_writes_bundle_constraints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    let out = logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--beta",
            "8",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let net: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("net.json")).unwrap())
            .unwrap();
    assert_eq!(net["beta"], 8.0);
    assert_eq!(net["theory"], "Bool");
    assert_eq!(net["nodes"].as_array().unwrap().len(), 5);
    assert!(dir.path().join("net.constraints.json").exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("net.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "compile");
    assert_eq!(manifest["theory_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn compile_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    for dir in [a.path(), b.path()] {
        let out = logikon(
            &[
                "compile",
                bool_thy.to_str().unwrap(),
                "--expr",
                "not(and(A, B))",
                "--init",
                "random",
                "--seed",
                "7",
                "--out",
                "net.json",
            ],
            dir,
        );
        assert_eq!(code(&out), 0);
    }
    for file in ["net.json", "net.constraints.json", "net.manifest.json"] {
        let lhs = std::fs::read(a.path().join(file)).unwrap();
        let rhs = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(lhs, rhs, "{file} differs between identical runs");
    }
}

#[test]
fn malformed_theory_is_an_input_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.thy");
    std::fs::write(&bad, "theory T {\n  op and 2;\n}\n").unwrap();
    let out = logikon(
        &[
            "compile",
            bad.to_str().unwrap(),
            "--expr",
            "and(A, B)",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("2:10"), "stderr: {stderr}");
}

#[test]
fn undeclared_connective_in_expr_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    let out = logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "nand(A, B)",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = logikon(
        &[
            "compile",
            "no-such-theory.thy",
            "--expr",
            "and(A, B)",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_prints_outputs_and_checks_arity() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    let out = logikon(
        &["eval", "--net", "net.json", "--input", "1,0,1", "--beta", "40"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-6);

    let out = logikon(
        &["eval", "--net", "net.json", "--input", "0.5"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_identity_passes_inputs_through() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "A",
            "--out",
            "id.json",
        ],
        dir.path(),
    );
    let out = logikon(&["eval", "--net", "id.json", "--input", "0.3"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.3");
}

#[test]
fn riemannian_training_stays_on_the_manifold() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let data = write_distrib_data(dir.path());
    let out = logikon(
        &[
            "train",
            "--theory",
            distrib.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--data",
            data.to_str().unwrap(),
            "--method",
            "riemannian",
            "--out",
            "trained.json",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,loss,constraint_norm,proj_grad_norm,beta,accepted"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let constraint_norm: f64 = cells[2].parse().unwrap();
        let accepted: bool = cells[5].parse().unwrap();
        if accepted {
            assert!(constraint_norm <= 1e-8, "off-manifold row: {line}");
        }
    }
    assert!(dir.path().join("trained.json").exists());
    assert!(dir.path().join("trained.manifest.json").exists());
}

#[test]
fn penalty_training_reports_nonzero_constraint_norm() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let data = write_distrib_data(dir.path());
    let out = logikon(
        &[
            "train",
            "--theory",
            distrib.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--data",
            data.to_str().unwrap(),
            "--method",
            "penalty",
            "--max-iters",
            "300",
            "--eta",
            "0.2",
            "--out",
            "trained.json",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    let constraint_norm: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!(constraint_norm > 1e-8, "penalty ended at |G| = {constraint_norm}");
}

#[test]
fn mismatched_data_arity_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "0,1,0\n").unwrap();
    let out = logikon(
        &[
            "train",
            "--theory",
            distrib.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--data",
            data.to_str().unwrap(),
            "--out",
            "trained.json",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn verify_bounds_suite_passes_for_bool() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    let out = logikon(
        &[
            "verify",
            "--theory",
            bool_thy.to_str().unwrap(),
            "--suite",
            "bounds",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert!(!report["entries"].as_array().unwrap().is_empty());
}

#[test]
fn verify_truth_suite_fails_at_low_beta_with_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    let out = logikon(
        &[
            "verify",
            "--net",
            "net.json",
            "--suite",
            "truth",
            "--beta",
            "2",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let entry = &report["entries"][0];
    assert_eq!(entry["status"], "fail");
    assert!(!entry["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn verify_roundtrip_suite_passes_on_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bool_thy = theories().join("bool.thy");
    logikon(
        &[
            "compile",
            bool_thy.to_str().unwrap(),
            "--expr",
            "or(and(A, B), and(A, C))",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    let out = logikon(
        &[
            "verify",
            "--net",
            "net.json",
            "--suite",
            "roundtrip",
            "--report",
            "report.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn full_pipeline_compile_train_verify_eval() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let data = write_distrib_data(dir.path());
    assert_eq!(
        code(&logikon(
            &[
                "compile",
                distrib.to_str().unwrap(),
                "--expr",
                "and(A, or(B, C))",
                "--beta",
                "8",
                "--out",
                "net.json",
            ],
            dir.path(),
        )),
        0
    );
    assert_eq!(
        code(&logikon(
            &[
                "train",
                "--theory",
                distrib.to_str().unwrap(),
                "--net",
                "net.json",
                "--data",
                data.to_str().unwrap(),
                "--out",
                "trained.json",
                "--trace",
                "trace.csv",
            ],
            dir.path(),
        )),
        0
    );
    assert_eq!(
        code(&logikon(
            &[
                "verify",
                "--net",
                "trained.json",
                "--suite",
                "roundtrip",
                "--report",
                "report.json",
            ],
            dir.path(),
        )),
        0
    );
    let out = logikon(
        &["eval", "--net", "trained.json", "--input", "1,0,1", "--beta", "40"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-3, "trained net at (1,0,1) gave {value}");
}

#[test]
fn training_a_net_against_a_mismatched_theory_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let bool_thy = theories().join("bool.thy");
    let data = write_distrib_data(dir.path());
    // the Distrib bundle has no `not` slot, so Bool's axioms cannot bind
    logikon(
        &[
            "compile",
            distrib.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--out",
            "net.json",
        ],
        dir.path(),
    );
    let out = logikon(
        &[
            "train",
            "--theory",
            bool_thy.to_str().unwrap(),
            "--net",
            "net.json",
            "--data",
            data.to_str().unwrap(),
            "--out",
            "trained.json",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not"), "stderr: {stderr}");
}

#[test]
fn config_file_annealing_schedule_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let distrib = theories().join("distrib.thy");
    let data = write_distrib_data(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "learning_rate": 0.1,
            "constraint_tolerance": 1e-8,
            "max_iterations": 10,
            "stationarity_tolerance": 1e-6,
            "retraction": { "max_newton_steps": 40, "singular_value_cutoff": 1e-10 },
            "beta_schedule": [4.0, 5.0, 6.0],
            "penalty_weight": 10.0,
            "seed": 0
        })
        .to_string(),
    )
    .unwrap();
    let out = logikon(
        &[
            "train",
            "--theory",
            distrib.to_str().unwrap(),
            "--expr",
            "and(A, or(B, C))",
            "--data",
            data.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "trained.json",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // the first trace row runs at the schedule's starting temperature, and
    // the exported bundle carries the final one
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let first = trace.lines().nth(1).unwrap();
    assert_eq!(first.split(',').nth(4).unwrap(), "4");
    let net: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trained.json")).unwrap())
            .unwrap();
    assert_eq!(net["beta"], 6.0);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("trained.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["beta_schedule"], serde_json::json!([4.0, 5.0, 6.0]));
}
