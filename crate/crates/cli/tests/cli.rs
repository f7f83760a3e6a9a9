use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use starkscatter_cli::ExperimentConfig;

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn starkscatter(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starkscatter"))
        .args(args)
        .env("STARKSCATTER_OUT", out)
        .output()
        .unwrap()
}

fn run(config: &Path, out: &Path) -> Output {
    starkscatter(&["run", config.to_str().unwrap()], out)
}

fn error_record(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap()
}

#[test]
fn config_echo_round_trips() {
    let mut seen = 0;
    for entry in fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        let echoed = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, echoed, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn coeffs_csv_matches_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config_dir().join("coeffs.toml"), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("coeffs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,b1,c1,a"));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let t = v[0];
        let b = -(2.0 * PI * t).sin() / (2.0 * PI);
        let c = (1.0 - (2.0 * PI * t).cos()) / (4.0 * PI * PI);
        let a = (t / 2.0 - (4.0 * PI * t).sin() / (8.0 * PI)) / (8.0 * PI * PI);
        assert!((v[1] - b).abs() <= 1e-10, "b at {t}");
        assert!((v[2] - c).abs() <= 1e-10, "c at {t}");
        assert!((v[3] - a).abs() <= 1e-10, "a at {t}");
        rows += 1;
    }
    assert_eq!(rows, 1025);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["scenario"], "coeffs");
    assert!(manifest["wall_clock_seconds"].as_f64().is_some());
    assert!(manifest["versions"]["starkscatter-core"].is_string());
}

#[test]
fn invariants_pass_for_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config_dir().join("invariants.toml"), dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let checks = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert!(checks.lines().count() > 8);
    assert!(
        checks.lines().skip(1).all(|l| l.ends_with(",true")),
        "{checks}"
    );
}

#[test]
fn oracle_reconstruction_meets_five_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config_dir().join("reconstruct-oracle.toml"), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics_0.json")).unwrap())
            .unwrap();
    let err = metrics["rel_l2_error"].as_f64().unwrap();
    assert!(err <= 0.05, "{err}");

    let report = starkscatter(&["report", dir.path().to_str().unwrap()], dir.path());
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("angles  rel. L² error"), "{text}");
    assert!(dir.path().join("slices_0.csv").is_file());
    assert!(dir.path().join("sinogram_heatmap_0.csv").is_file());
}

#[test]
fn reruns_reproduce_csv_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config_dir().join("freeprop.toml");
    assert!(run(&cfg, a.path()).status.success());
    assert!(run(&cfg, b.path()).status.success());
    for name in ["coeffs.csv", "freeprop.csv", "checks.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn missing_section_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"propagate\"\n[field]\nmean = [0.0]\n").unwrap();
    let out = starkscatter(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let record = error_record(&out);
    assert_eq!(record["kind"], "validation");
    assert_eq!(record["exit_code"], 2);
}

#[test]
fn packet_leaving_the_box_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config_dir().join("freeprop.toml"))
        .unwrap()
        .replace("momentum = [1.5]", "momentum = [30.0]");
    let cfg = dir.path().join("fast.toml");
    fs::write(&cfg, text).unwrap();
    let out = run(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("half-extent"));
}

#[test]
fn boundary_mass_aborts_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config_dir().join("freeprop.toml"))
        .unwrap()
        .replace("every = 50", "every = 50\nboundary_threshold = 1e-300");
    let cfg = dir.path().join("tight.toml");
    fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&cfg, &out_dir);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(error_record(&out)["kind"], "numerical-guard");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "error");
    assert!(out_dir.join("error.json").is_file());
}

#[test]
fn report_on_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = starkscatter(&["report", dir.path().to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["status"], "error");
}

#[test]
fn report_reads_the_sweep_ledger() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"status":"ok","scenario":"sweep","wall_clock_seconds":1.0,"jobs":1,"stages":[],"checks":[]}"#,
    )
    .unwrap();
    let ledger = "s,lambda,angle,offset,transverse,transverse_imag,along\n\
        0,25,0,0.5,-1.0,0,0\n0,100,0,0.5,-1.2,0,0\n0,400,0,0.5,-1.25,0,0\n\
        0,25,0,1,-1.0,0,0\n0,100,0,1,-1.1,0,0\n0,400,0,1,-1.6,0,0\n";
    fs::write(dir.path().join("ladder.csv"), ledger).unwrap();
    let out = starkscatter(&["report", dir.path().to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("λ-monotonicity"), "{text}");
    assert!(text.contains("1 of 2 ladders monotone"), "{text}");
    let curves = fs::read_to_string(dir.path().join("lambda_convergence.csv")).unwrap();
    assert_eq!(curves.lines().count(), 7);
}
