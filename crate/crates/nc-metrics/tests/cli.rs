//! End-to-end tests of the `nc-metrics` binary: subcommands, file formats,
//! error codes, and determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nc-metrics"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn stderr_error_code(output: &Output) -> String {
    let v: Value = serde_json::from_slice(&output.stderr).expect("stderr is a JSON error object");
    v["error"]["code"].as_str().expect("error code").to_string()
}

fn write_d1(path: &Path) {
    std::fs::write(path, "0,1,1\n0,1,-1\n1,-1,1\n1,-1,-1\n").unwrap();
}

fn write_d0(path: &Path) {
    std::fs::write(path, "0,1,0\n0,1,0\n1,-1,0\n1,-1,0\n").unwrap();
}

#[test]
fn metrics_on_d1() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    let out = dir.path().join("r.json");
    write_d1(&input);

    let output = run(&[
        "metrics",
        "--input",
        input.to_str().unwrap(),
        "--policy",
        "rel:1e-12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["vci"].as_f64().unwrap().abs() <= 1e-10);
    assert!((report["squared_distance"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert_eq!(report["policy"], "rel:1e-12");
}

#[test]
fn metrics_missing_file_is_io_not_found() {
    let output = run(&["metrics", "--input", "/nonexistent/features.csv"]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "io.not_found");
}

#[test]
fn metrics_bad_policy_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    write_d1(&input);
    let output = run(&[
        "metrics",
        "--input",
        input.to_str().unwrap(),
        "--policy",
        "rank:0",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "config.bad_policy");
}

#[test]
fn probe_on_d0_reaches_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d0.csv");
    write_d0(&input);
    let output = run(&["probe", "--input", input.to_str().unwrap()]);
    let solution = stdout_json(&output);
    assert!(solution["loss"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(solution["bias"].as_array().unwrap().len(), 2);
    assert_eq!(solution["weights"].as_array().unwrap().len(), 2);
}

#[test]
fn synth_then_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("s.csv");
    let output = run(&[
        "synth",
        "--geometry",
        "simplex",
        "--k",
        "3",
        "--p",
        "3",
        "--n",
        "5",
        "--seed",
        "7",
        "--out",
        features.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let output = run(&["metrics", "--input", features.to_str().unwrap()]);
    let report = stdout_json(&output);
    assert!(report["vci"].as_f64().unwrap().abs() <= 1e-8);
    assert_eq!(report["class_count"], 3);
    assert_eq!(report["rank_bound"], 2);
}

#[test]
fn synth_npy_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("noisy.npy");
    let output = run(&[
        "synth",
        "--geometry",
        "vb-perp-noise",
        "--k",
        "2",
        "--p",
        "4",
        "--n",
        "6",
        "--sigma",
        "0.5",
        "--seed",
        "3",
        "--out",
        features.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(features.exists());
    assert!(dir.path().join("noisy.labels.npy").exists());

    let output = run(&["metrics", "--input", features.to_str().unwrap()]);
    let report = stdout_json(&output);
    assert_eq!(report["p"], 4);
    assert_eq!(report["n"], 12);
    assert!(report["vci"].as_f64().unwrap().abs() <= 1e-8);
    assert!(report["proj_vb_perp"].as_f64().unwrap() > 0.0);
}

#[test]
fn metrics_accepts_explicit_labels_path() {
    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("f.npy");
    let output = run(&[
        "synth",
        "--geometry",
        "simplex",
        "--k",
        "2",
        "--p",
        "2",
        "--n",
        "3",
        "--out",
        features.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    // Move the labels somewhere the default derivation will not find them.
    let labels = dir.path().join("elsewhere.npy");
    std::fs::rename(dir.path().join("f.labels.npy"), &labels).unwrap();

    let output = run(&["metrics", "--input", features.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "io.not_found");

    let output = run(&[
        "metrics",
        "--input",
        features.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--format",
        "npy",
    ]);
    let report = stdout_json(&output);
    assert_eq!(report["n"], 6);
    assert!(report["vci"].as_f64().unwrap().abs() <= 1e-10);
}

#[test]
fn synth_noise_requires_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let output = run(&[
        "synth",
        "--geometry",
        "vb-noise",
        "--k",
        "2",
        "--p",
        "3",
        "--n",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "config.bad_args");
}

#[test]
fn spectrum_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    let out = dir.path().join("spec.json");
    write_d1(&input);
    let output = run(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let eigs_b = report["eigs_sigma_b"].as_array().unwrap();
    assert!((eigs_b[0].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert!(eigs_b[1].as_f64().unwrap().abs() <= 1e-10);
    assert_eq!(report["retained_t"], 2);
    assert!(report["fuzziness_sensitivity"].is_object());

    let csv_path = dir.path().join("spec.eigs.csv");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eig_sigma_b,eig_sigma_t"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn spectrum_honors_explicit_csv_path() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    let csv_out = dir.path().join("custom_eigs.csv");
    write_d1(&input);
    let output = run(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--csv-out",
        csv_out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("eig_sigma_b,eig_sigma_t\n"));
}

#[test]
fn transfer_fixture_report() {
    let output = run(&["transfer", "--fixtures"]);
    let report = stdout_json(&output);
    for group in ["tau", "lambda", "overall"] {
        let r = report["groups"][group]["vci"].as_f64().unwrap();
        assert!(r > 0.0, "group {group}: r(vci, mlog) = {r}");
    }
}

#[test]
fn subcommands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    write_d1(&input);
    let a = run(&["metrics", "--input", input.to_str().unwrap()]);
    let b = run(&["metrics", "--input", input.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);

    let s1 = dir.path().join("a.csv");
    let s2 = dir.path().join("b.csv");
    for out in [&s1, &s2] {
        let output = run(&[
            "synth",
            "--geometry",
            "vb-noise",
            "--k",
            "3",
            "--p",
            "4",
            "--n",
            "5",
            "--sigma",
            "1.5",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
    }
    assert_eq!(
        std::fs::read(&s1).unwrap(),
        std::fs::read(&s2).unwrap()
    );
}

#[test]
fn degenerate_probe_input_reports_module_code() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("imbalanced.csv");
    std::fs::write(&input, "0,1,0\n0,2,0\n0,3,0\n1,-1,0\n").unwrap();
    let output = run(&["probe", "--input", input.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "probe.imbalanced");
}

#[test]
fn metrics_reports_located_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "0,1,0\n0,inf,0\n1,-1,0\n1,-1,0\n").unwrap();
    let output = run(&["metrics", "--input", input.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_error_code(&output), "data.non_finite");
    let v: Value = serde_json::from_slice(&output.stderr).unwrap();
    let message = v["error"]["message"].as_str().unwrap();
    assert!(message.contains(":2:"), "message locates the bad line: {message}");
}

#[test]
fn metrics_json_has_schema_fields_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    write_d1(&input);
    let output = run(&["metrics", "--input", input.to_str().unwrap()]);
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let keys = [
        "\"p\"",
        "\"n\"",
        "\"class_count\"",
        "\"fuzziness\"",
        "\"squared_distance\"",
        "\"cos_within\"",
        "\"cos_total\"",
        "\"class_separation\"",
        "\"trace_ratio\"",
        "\"vci\"",
        "\"rank_bound\"",
        "\"proj_vb\"",
        "\"proj_vb_perp\"",
        "\"policy\"",
        "\"eigs_sigma_b\"",
        "\"eigs_sigma_t\"",
    ];
    let mut last = 0;
    for key in keys {
        let pos = text[last..]
            .find(&format!("{key}:"))
            .unwrap_or_else(|| panic!("missing or out-of-order key {key}"));
        last += pos;
    }
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d1.csv");
    write_d1(&input);
    let output = bin()
        .env("NC_METRICS_THREADS", "1")
        .args(["metrics", "--input", input.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
}
