//! Command-level tests: file formats, exit codes, determinism and the
//! variant diff mode, driven through the real binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use spectral_shap::synth;
use spectral_shap::tree::write_tree_model_file;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-shap"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn write_queries(dir: &Path) -> PathBuf {
    let path = dir.join("queries.csv");
    std::fs::write(
        &path,
        "insured,region,age\n1,north,25.0\n0,coast,70.1\n0,east,44.9\n",
    )
    .unwrap();
    path
}

/// Builds a model file over the fixture encoding (n = 10) and transforms it.
fn transform_fixture_model(dir: &Path) -> (PathBuf, PathBuf) {
    let model = dir.join("model.json");
    let ensemble = synth::random_ensemble(10, 5, 4, 99);
    write_tree_model_file(&model, &ensemble).unwrap();
    let spectrum = dir.join("spectrum.json");
    let status = bin()
        .args(["transform", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&spectrum)
        .status()
        .unwrap();
    assert!(status.success());
    (model, spectrum)
}

#[test]
fn transform_writes_spectrum_energy_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, spectrum) = transform_fixture_model(dir.path());
    assert!(spectrum.exists());
    assert!(dir.path().join("spectrum.energy.json").exists());
    assert!(dir.path().join("spectrum.manifest.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "transform");
    assert!(manifest["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn transform_prune_preset_reports_energy_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let ensemble = synth::random_ensemble(12, 8, 6, 123);
    write_tree_model_file(&model, &ensemble).unwrap();
    let spectrum = dir.path().join("pruned.json");
    let status = bin()
        .args(["transform", "--prune-preset", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&spectrum)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("pruned.energy.json")).unwrap(),
    )
    .unwrap();
    let kept = report["kept_energy"].as_f64().unwrap();
    let total = report["total_energy"].as_f64().unwrap();
    assert!(kept >= 0.9995 * total, "kept {kept} of {total}");
}

#[test]
fn transform_is_byte_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (model, spectrum) = transform_fixture_model(dir.path());
    let again = dir.path().join("again.json");
    let status = bin()
        .args(["transform", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&again)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(&spectrum).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn explain_outputs_are_deterministic_and_efficient() {
    let dir = tempfile::tempdir().unwrap();
    let (_, spectrum) = transform_fixture_model(dir.path());
    let queries = write_queries(dir.path());

    let run = |out: &Path| {
        let status = bin()
            .args(["explain", "--spectrum"])
            .arg(&spectrum)
            .arg("--data")
            .arg(fixture("members.csv"))
            .arg("--schema")
            .arg(fixture("members.schema.json"))
            .args(["--background-size", "16", "--background-seed", "5"])
            .arg("--queries")
            .arg(&queries)
            .args(["--variant", "all"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a);
    run(&out_b);
    let csv_a = std::fs::read(out_a.join("shap.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(out_b.join("shap.csv")).unwrap());

    // 3 queries x 10 features, header line on top.
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 10);
    assert!(text.starts_with("query_id,feature_index,phi\n"));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("summary.json")).unwrap())
            .unwrap();
    assert!(
        summary["variant_max_pairwise_deviation"].as_f64().unwrap() <= 1e-10,
        "variant diff mode must report agreement"
    );
    for q in summary["queries"].as_array().unwrap() {
        assert!(q["efficiency_residual"].as_f64().unwrap().abs() <= 1e-9);
    }
    assert!(out_a.join("encoding_report.json").exists());
    assert!(out_a.join("manifest.json").exists());
}

#[test]
fn explain_dimension_mismatch_exits_3_naming_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _spectrum) = transform_fixture_model(dir.path());
    // A spectrum over the wrong dimension.
    let wrong = dir.path().join("wrong.json");
    spectral_shap::spectrum::write_spectrum_file(
        &wrong,
        &synth::random_spectrum(7, 5, 2, 1).unwrap(),
    )
    .unwrap();
    let queries = write_queries(dir.path());
    let output = bin()
        .args(["explain", "--spectrum"])
        .arg(&wrong)
        .arg("--data")
        .arg(fixture("members.csv"))
        .arg("--schema")
        .arg(fixture("members.schema.json"))
        .args(["--background-size", "8"])
        .arg("--queries")
        .arg(&queries)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("members.csv"), "stderr: {stderr}");
}

#[test]
fn malformed_model_exits_2_with_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    std::fs::write(
        &model,
        r#"{"n_features": 2, "combine": "weighted_sum",
            "trees": [{"weight": 1.0, "root": {"feature": 0, "left": {"value": 1.0}}}]}"#,
    )
    .unwrap();
    let output = bin()
        .args(["transform", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(dir.path().join("out.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("/trees/0/root/right"), "stderr: {stderr}");
}

#[test]
fn verify_defaults_pass_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["verify", "--trials", "5", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().count() >= 6);

    let output = bin()
        .args(["verify", "--trials", "2", "--corrupt-weight-table", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("efficiency"), "stderr: {stderr}");
}

#[test]
fn bench_empty_queries_writes_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (_, spectrum) = transform_fixture_model(dir.path());
    let queries = dir.path().join("empty.csv");
    std::fs::write(&queries, "insured,region,age\n").unwrap();
    let status = bin()
        .args(["bench", "--spectrum"])
        .arg(&spectrum)
        .arg("--data")
        .arg(fixture("members.csv"))
        .arg("--schema")
        .arg(fixture("members.schema.json"))
        .args(["--background-size", "8"])
        .arg("--queries")
        .arg(&queries)
        .arg("--out")
        .arg(dir.path().join("bench"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("bench/bench.csv")).unwrap();
    assert_eq!(
        csv,
        "method,sample_factor,repeats,wall_time_s_mean,wall_time_s_std,r2_vs_exact\n"
    );
}

#[test]
fn bench_reports_variants_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let (_, spectrum) = transform_fixture_model(dir.path());
    let queries = write_queries(dir.path());
    let status = bin()
        .args(["bench", "--spectrum"])
        .arg(&spectrum)
        .arg("--data")
        .arg(fixture("members.csv"))
        .arg("--schema")
        .arg(fixture("members.schema.json"))
        .args(["--background-size", "8", "--repeat", "3"])
        .arg("--queries")
        .arg(&queries)
        .arg("--out")
        .arg(dir.path().join("bench"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("bench/bench.csv")).unwrap();
    // 4 variants + 3 baselines at n=10 <= 12.
    assert_eq!(csv.lines().count(), 1 + 4 + 3);
    for variant in ["base", "precompute", "sparse", "positional"] {
        assert!(csv.contains(&format!("\n{variant},")) || csv.starts_with(&format!("{variant},")));
    }
    assert!(csv.contains("kernel_shap,0.02"));
    // Engine rows carry r2 = 1 against the exact reference.
    let convergence = std::fs::read_to_string(dir.path().join("bench/convergence.csv")).unwrap();
    assert!(convergence.starts_with("sample_factor,wall_time_s,r2_vs_exact\n"));
    assert_eq!(convergence.lines().count(), 4);
}

#[test]
fn approx_recovers_spectrum_from_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("recovered.json");
    let status = bin()
        .args([
            "approx",
            "--source",
            "random-sparse:10,2,42",
            "--n",
            "10",
            "--mode",
            "low-degree",
            "--max-degree",
            "2",
            "--samples",
            "1024",
            "--top-k",
            "10",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let recovered = spectral_shap::spectrum::read_spectrum_file(&out).unwrap();
    let planted = synth::random_spectrum(10, 10, 2, 42).unwrap();
    assert_eq!(recovered.support_size(), 10);
    for (f, c) in planted.terms() {
        assert!((recovered.coefficient(f).unwrap_or(0.0) - c).abs() <= 1e-6);
    }
    assert!(out.with_extension("recovery.json").exists());
}

#[test]
fn config_file_supplies_defaults_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"threads": 2, "verify": {"trials": 4, "n": 8}}"#,
    )
    .unwrap();
    let output = bin()
        .args(["--config"])
        .arg(&config)
        .args(["verify", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["parameters"]["trials"], 4);
    assert_eq!(manifest["parameters"]["n"], 8);
}

#[test]
fn dry_run_validates_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = transform_fixture_model(dir.path());
    let out = dir.path().join("nope.json");
    let status = bin()
        .args(["--dry-run", "transform", "--model"])
        .arg(&model)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(!out.exists());
}
