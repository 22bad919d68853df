#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use pnrstat::detector::{self, ClickDistribution, DetectorConfig, ResponseMatrix};
use pnrstat::diagnostics;
use pnrstat::fock::{self, PhotonDistribution, SourceSpec};
use pnrstat::harness::{self, ExperimentConfig};
use pnrstat::retrieval::{self, RetrievalSettings};

pub fn fixture<T: DeserializeOwned>(name: &str) -> T {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

#[derive(serde::Deserialize)]
pub struct ReferenceListing {
    pub channels: usize,
    pub efficiency: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub cutoff: usize,
    pub clicks: Vec<f64>,
    pub response: Vec<Vec<f64>>,
    pub estimate: Vec<f64>,
    pub iterations: u64,
}

/// Largest deviation of the retrieval from the executed reference listing, and our
/// iteration count.
pub fn reference_listing_gap() -> (f64, u64) {
    let r: ReferenceListing = fixture("reference_listing.json");
    let cfg = DetectorConfig::new(r.channels, r.efficiency).unwrap();
    let matrix = ResponseMatrix::new(cfg, r.cutoff).unwrap();
    let d = ClickDistribution::unnormalized(r.clicks.clone()).unwrap();
    let settings = RetrievalSettings::eme(r.lambda)
        .with_epsilon(r.epsilon)
        .with_cutoff(r.cutoff);
    let report = retrieval::eme_retrieve(&d, &matrix, &settings).unwrap();
    let gap = report
        .estimate
        .probs()
        .iter()
        .zip(&r.estimate)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (gap, report.iterations)
}

pub const STOCHASTIC_CHANNELS: [usize; 5] = [1, 2, 5, 10, 16];
pub const STOCHASTIC_EFFICIENCIES: [f64; 4] = [0.1, 0.5, 0.65, 1.0];

/// Largest `|Σ_m C[m][n] − 1|` over all columns.
pub fn column_sum_gap(channels: usize, efficiency: f64, cutoff: usize) -> f64 {
    let m =
        ResponseMatrix::new(DetectorConfig::new(channels, efficiency).unwrap(), cutoff).unwrap();
    (0..m.cols())
        .map(|n| ((0..m.rows()).map(|r| m.get(r, n)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn microscopic_sources() -> Vec<SourceSpec> {
    [
        "coherent:5",
        "thermal:2",
        "cluster:9:0.55",
        "subtracted:5.77:2",
        "cluster:1:0.55",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

/// TVD between photon-level Monte Carlo frequencies and the analytic click law.
pub fn microscopic_tvd(spec: &SourceSpec, config: DetectorConfig, runs: u64, seed: u64) -> f64 {
    let cutoff = spec.suggested_cutoff();
    let p = spec.distribution(cutoff).unwrap();
    let exact = detector::forward(&ResponseMatrix::new(config, cutoff).unwrap(), &p).unwrap();
    let sim = detector::simulate_microscopic(&p, config, runs, seed).unwrap();
    sim.frequencies()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0
}

/// Sampled click data of `spec` at M = 10, η = 0.5.
pub fn sampled(spec: &str, runs: u64, seed: u64) -> (ClickDistribution, PhotonDistribution) {
    let spec: SourceSpec = spec.parse().unwrap();
    let cutoff = spec.suggested_cutoff();
    let truth = spec.distribution(cutoff).unwrap();
    let m = ResponseMatrix::new(DetectorConfig::default(), cutoff).unwrap();
    let exact = detector::forward(&m, &truth).unwrap();
    (detector::sample_clicks(&exact, runs, seed).unwrap(), truth)
}

pub fn default_matrix() -> ResponseMatrix {
    ResponseMatrix::new(DetectorConfig::default(), 50).unwrap()
}

/// Largest step-to-step decrease of the EM log-likelihood over `steps` iterations.
pub fn em_likelihood_max_drop(d: &ClickDistribution, matrix: &ResponseMatrix, steps: u64) -> f64 {
    let settings = RetrievalSettings {
        max_iterations: steps,
        ..RetrievalSettings::em().with_traces(1).with_epsilon(1e-300)
    };
    let report = retrieval::em_retrieve(d, matrix, &settings).unwrap();
    let trace = report.likelihood_trace.unwrap();
    trace
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest elementwise gap between the EM and zero-weight EME iterates `1..=steps`.
pub fn zero_lambda_gap(d: &ClickDistribution, matrix: &ResponseMatrix, steps: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        let em = RetrievalSettings {
            max_iterations: k,
            ..RetrievalSettings::em().with_epsilon(1e-300)
        };
        let eme = RetrievalSettings {
            max_iterations: k,
            ..RetrievalSettings::eme(0.0).with_epsilon(1e-300)
        };
        let a = retrieval::em_retrieve(d, matrix, &em).unwrap();
        let b = retrieval::eme_retrieve(d, matrix, &eme).unwrap();
        let gap = a
            .estimate
            .probs()
            .iter()
            .zip(b.estimate.probs())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    worst
}

pub fn g2_loss_gap(p: &PhotonDistribution, transmittance: f64) -> f64 {
    let lossy = fock::apply_loss(p, transmittance).unwrap();
    (diagnostics::g2(&lossy).unwrap() - diagnostics::g2(p).unwrap()).abs()
}

pub fn wigner_parity_gap(p: &PhotonDistribution) -> f64 {
    (diagnostics::wigner_origin(p) - diagnostics::parity(p) / std::f64::consts::PI).abs()
}

/// Runs `cfg` twice into fresh directories and lists files whose bytes differ.
/// `timing.json` is excluded since it records wall time.
pub fn replay_differences(cfg: &ExperimentConfig, root: &Path) -> Vec<PathBuf> {
    let dirs = [root.join("first"), root.join("second")];
    for dir in &dirs {
        let result = harness::run_experiment(cfg).unwrap();
        harness::write_result(&result, dir).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    names
        .into_iter()
        .filter(|n| n != "timing.json")
        .filter(|n| {
            std::fs::read(dirs[0].join(n)).unwrap() != std::fs::read(dirs[1].join(n)).unwrap()
        })
        .map(PathBuf::from)
        .collect()
}
