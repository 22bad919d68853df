//! End-to-end runs of the `pnrstat` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::*;

fn pnrstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnrstat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_record(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.lines().last().unwrap()).unwrap()
}

fn exit_code(args: &[&str]) -> i32 {
    let out = pnrstat(args);
    let code = out.status.code().unwrap();
    if code != 0 {
        assert_eq!(error_record(&out)["exit_code"], code);
    }
    code
}

#[test]
fn exact_simulation_prints_click_probabilities() {
    let out = pnrstat(&["simulate", "--source", "coherent:1", "--format", "json"]);
    let file = stdout_json(&out);
    assert_eq!(file["M"], 10);
    assert_eq!(file["mode"], "probabilities");
    let values: Vec<f64> = serde_json::from_value(file["values"].clone()).unwrap();
    assert_eq!(values.len(), 11);
    assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((values[0] - (-0.5f64).exp()).abs() < 1e-15);
}

#[test]
fn sampled_csv_round_trips_through_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let clicks = dir.path().join("clicks.csv");
    let clicks = clicks.to_str().unwrap();
    let out = pnrstat(&[
        "simulate",
        "--source",
        "thermal:2",
        "--runs",
        "300000",
        "--seed",
        "11",
        "-o",
        clicks,
    ]);
    assert!(out.status.success());
    assert!(dir.path().join("clicks.json").exists());
    let text = std::fs::read_to_string(clicks).unwrap();
    assert!(text.starts_with("m,value\n"));

    let report = stdout_json(&pnrstat(&["retrieve", clicks]));
    assert_eq!(report["algorithm"], "eme");
    let estimate: Vec<f64> = serde_json::from_value(report["estimate"].clone()).unwrap();
    let p = pnrstat::PhotonDistribution::new(estimate).unwrap();
    let truth = pnrstat::fock::thermal(2.0, 50).unwrap();
    assert!(pnrstat::diagnostics::fidelity(&p, &truth) > 0.99);
}

#[test]
fn sampling_without_a_seed_is_rejected() {
    assert_eq!(
        exit_code(&["simulate", "--source", "coherent:1", "--runs", "10"]),
        2
    );
}

#[test]
fn retrieval_of_listing_clicks_matches_reference() {
    let r: ReferenceListing = fixture("reference_listing.json");
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("listing.json");
    let file = serde_json::json!({
        "M": r.channels, "eta": r.efficiency, "mode": "probabilities", "values": r.clicks
    });
    std::fs::write(&input, file.to_string()).unwrap();
    let report = stdout_json(&pnrstat(&["retrieve", input.to_str().unwrap()]));
    let estimate: Vec<f64> = serde_json::from_value(report["estimate"].clone()).unwrap();
    let gap = estimate
        .iter()
        .zip(&r.estimate)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-9, "{gap:e}");
    assert_eq!(report["stop_reason"], "converged");
}

#[test]
fn direct_inverse_reports_signed_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let clicks = dir.path().join("c.json");
    let clicks = clicks.to_str().unwrap();
    let args = [
        "simulate",
        "--source",
        "thermal:5",
        "--runs",
        "300000",
        "--seed",
        "3",
        "--format",
        "json",
        "-o",
        clicks,
    ];
    assert!(pnrstat(&args).status.success());
    let out = stdout_json(&pnrstat(&[
        "retrieve",
        clicks,
        "--algorithm",
        "direct_inverse",
    ]));
    assert_eq!(out["negative"], true);
    assert_eq!(out["estimate"].as_array().unwrap().len(), 51);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn single_photon_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "one.csv", "n,p\n0,0\n1,1\n");
    let d = stdout_json(&pnrstat(&["diagnose", &input]));
    assert_eq!(d["g2"], 0.0);
    assert_eq!(d["q"], -1.0);
    assert_eq!(d["parity"], -1.0);
    assert!((d["w00"].as_f64().unwrap() + std::f64::consts::FRAC_1_PI).abs() < 1e-15);

    let reference = write(dir.path(), "ref.json", "[0.5, 0.5]");
    let d = stdout_json(&pnrstat(&["diagnose", &input, "--reference", &reference]));
    assert!((d["fidelity"].as_f64().unwrap() - 0.5).abs() < 1e-15);
    assert!((d["tvd"].as_f64().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_sum = write(dir.path(), "bad.json", "[0.5, -0.1, 0.6]");
    let garbage = write(dir.path(), "garbage.json", "{");
    let missing = dir.path().join("missing.csv");
    let vacuum = write(dir.path(), "vacuum.json", "[1.0]");
    assert_eq!(exit_code(&["simulate", "--source", "coherent:-1"]), 2);
    assert_eq!(
        exit_code(&["simulate", "--source", "coherent:1", "--efficiency", "1.5"]),
        2
    );
    assert_eq!(exit_code(&["diagnose", &bad_sum]), 3);
    assert_eq!(exit_code(&["diagnose", &garbage]), 8);
    assert_eq!(exit_code(&["simulate", "--source", "laser:1"]), 9);
    assert_eq!(
        exit_code(&["simulate", "--source", "coherent:1", "--format", "xml"]),
        9
    );
    assert_eq!(exit_code(&["diagnose", missing.to_str().unwrap()]), 10);
    assert_eq!(exit_code(&["frobnicate"]), 11);
    assert_eq!(error_record(&pnrstat(&["frobnicate"]))["error"], "usage");

    let d = stdout_json(&pnrstat(&["diagnose", &vacuum]));
    assert!(d["g2"].is_null());
    assert_eq!(d["parity"], 1.0);
}

#[test]
fn experiment_writes_result_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "exp.toml",
        "schema_version = 1\nkind = \"single_retrieval\"\nseed = 5\nsources = [\"coherent:2\"]\n",
    );
    let out_dir = dir.path().join("out");
    let out = pnrstat(&[
        "experiment",
        &config,
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "config.toml",
        "manifest.json",
        "timing.json",
        "rows.csv",
        "rows.json",
    ] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["kind"], "single_retrieval");

    let no_dir = pnrstat(&["experiment", &config]);
    assert_eq!(no_dir.status.code(), Some(2));
}
