// End-to-end checks of the binary: output formats, exit codes, artifact
// determinism, and the documented failure modes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mati"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn bound_prints_published_value_and_oracle_agrees() {
    let out = run(&["bound", "--L", "0.738", "--gamma", "1.544", "--lambda", "0", "--oracle"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("tau_mati  0.7908"), "{text}");
    assert!(text.contains("oracle    0.7908"), "{text}");
}

#[test]
fn bound_middle_branch_prints_exact_third() {
    let out = run(&["bound", "--L", "1", "--gamma", "1", "--lambda", "0.5"]);
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("0.3333"));
}

#[test]
fn bound_json_keeps_full_precision() {
    let out = run(&["bound", "--L", "2", "--gamma", "2.151", "--lambda", "0", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("valid json");
    let value = v["bound"]["value"].as_f64().unwrap();
    assert_eq!(value.to_bits(), 0.47609365168815165f64.to_bits());
    assert_eq!(v["bound"]["regime"], "gamma_greater");
}

#[test]
fn invalid_lambda_is_a_usage_error() {
    let out = run(&["bound", "--L", "1", "--gamma", "1", "--lambda", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("lambda"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["bound", "--L", "1", "--gamma", "1", "--lambda", "0", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_an_ingestion_error() {
    let out = run(&["linear-sweep", "--system", "/nonexistent/system.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("/nonexistent/system.json"));
}

#[test]
fn malformed_input_file_is_an_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["verify-cert", "--certificate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_delta_list_yields_header_only_csv_and_success() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    let out = run(&[
        "linear-sweep",
        "--system",
        scenario("ex2_system.json").to_str().unwrap(),
        "--deltas",
        "",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let contents = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(contents, "delta,tau_baseline,tau_best,k_best,improvement_pct\n");
}

#[test]
fn sweep_artifacts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let out = run(&[
            "linear-sweep",
            "--system",
            scenario("ex2_system.json").to_str().unwrap(),
            "--deltas",
            "0.5",
            "--grid-step",
            "0.5",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b);
    let text = String::from_utf8(bytes_a).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
}

#[test]
fn zero_initial_condition_reports_stable_zero_trace() {
    let out = run(&["simulate", "--scenario", scenario("ex2_zero_ic.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("verdict       stable"), "{text}");
    assert!(text.contains("final_norm    0.0000e0"), "{text}");
}

#[test]
fn slow_round_robin_scenario_diverges() {
    let out = run(&["simulate", "--scenario", scenario("ex2_rr_unstable.json").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("verdict       diverged"));
}

#[test]
fn below_bound_scenario_settles_with_trace_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "simulate",
        "--scenario",
        scenario("ex2_tod_below_bound.json").to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(v["verdict"], "stable");
    assert!(v["decay_rate"].as_f64().unwrap() < -0.3);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("t,j,tau,kappa,"), "{}", &text[..60.min(text.len())]);
    assert!(text.lines().count() > 100);
}

#[test]
fn verify_cert_passes_and_prints_interval() {
    let out = run(&[
        "verify-cert",
        "--certificate",
        scenario("ex1_cert_relaxed.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("pass        true"), "{text}");
    assert!(text.contains("tau_mati    0.7908"), "{text}");
}

#[test]
fn uncertifiable_certificate_exits_5_with_witness() {
    let out = run(&[
        "verify-cert",
        "--certificate",
        scenario("ex1_cert_uncertifiable.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stdout_of(&out).contains("pass        false"));
    assert!(stderr_of(&out).contains("fails at (x, e)"));
}

#[test]
fn empirical_round_robin_uses_monodromy_boundary() {
    let out = run(&[
        "empirical",
        "--system",
        scenario("ex2_system_rr.json").to_str().unwrap(),
        "--lo",
        "0.3",
        "--hi",
        "2.0",
    ]);
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("boundary  1.0351"));
}

#[test]
fn empirical_reports_no_boundary_for_stable_bracket() {
    let out = run(&[
        "empirical",
        "--system",
        scenario("ex2_system_rr.json").to_str().unwrap(),
        "--lo",
        "0.1",
        "--hi",
        "0.5",
    ]);
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("no boundary in [0.1000, 0.5000]"));
}

#[test]
fn phi_csv_is_identical_on_stdout_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phi.csv");
    let args = ["phi", "--L", "1", "--gamma", "1", "--phi0", "2", "--tau-end", "0.1", "--step", "0.05"];
    let piped = run(&args);
    assert!(piped.status.success());
    let mut with_out: Vec<&str> = args.to_vec();
    with_out.extend_from_slice(&["--out", path.to_str().unwrap()]);
    let filed = run(&with_out);
    assert!(filed.status.success());
    let file_text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(stdout_of(&piped), file_text);
    assert_eq!(file_text.lines().next(), Some("tau,phi"));
    assert_eq!(file_text.lines().count(), 4);
}
