//! Comparisons against frozen external computations.

mod common;

use std::time::Instant;

use pnrstat::detector::{DetectorConfig, ResponseMatrix};
use pnrstat::fock;

use common::*;

#[derive(serde::Deserialize)]
struct HighPrecision {
    negative_binomial: NegativeBinomial,
    response_columns: Vec<ResponseColumn>,
}

#[derive(serde::Deserialize)]
struct NegativeBinomial {
    shape: u32,
    mean: f64,
    cutoff: usize,
    values: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct ResponseColumn {
    channels: usize,
    efficiency: f64,
    photons: usize,
    values: Vec<f64>,
}

#[test]
fn reference_listing_output_is_reproduced() {
    let start = Instant::now();
    let (gap, iterations) = reference_listing_gap();
    let elapsed = start.elapsed().as_secs_f64();
    let expected = fixture::<ReferenceListing>("reference_listing.json").iterations;
    assert!(gap <= 1e-9, "{gap:e}");
    assert!(
        iterations.abs_diff(expected) <= 1,
        "{iterations} vs {expected}"
    );
    assert!(elapsed < 5.0, "{elapsed} s");
}

#[test]
fn response_matrix_matches_reference_listing() {
    let r: ReferenceListing = fixture("reference_listing.json");
    let m = ResponseMatrix::new(
        DetectorConfig::new(r.channels, r.efficiency).unwrap(),
        r.cutoff,
    )
    .unwrap();
    assert_eq!(
        (m.rows(), m.cols()),
        (r.response.len(), r.response[0].len())
    );
    for (i, row) in r.response.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            assert!(
                (m.get(i, n) - v).abs() <= 1e-12,
                "C[{i}][{n}] = {} vs {v}",
                m.get(i, n)
            );
        }
    }
}

#[test]
fn response_columns_match_high_precision() {
    let hp: HighPrecision = fixture("high_precision.json");
    for col in &hp.response_columns {
        let cfg = DetectorConfig::new(col.channels, col.efficiency).unwrap();
        let m = ResponseMatrix::new(cfg, col.photons.max(1)).unwrap();
        for (i, &v) in col.values.iter().enumerate() {
            let got = m.get(i, col.photons);
            assert!(
                (got - v).abs() <= 1e-12,
                "M = {}, n = {}, m = {i}: {got:e} vs {v:e}",
                col.channels,
                col.photons
            );
        }
    }
}

#[test]
fn negative_binomial_matches_high_precision() {
    let hp: HighPrecision = fixture("high_precision.json");
    let nb = &hp.negative_binomial;
    let p = fock::multimode_thermal(nb.mean, nb.shape, nb.cutoff).unwrap();
    for (n, (&got, &want)) in p.probs().iter().zip(&nb.values).enumerate() {
        assert!((got - want).abs() <= 1e-14, "n = {n}: {got:e} vs {want:e}");
    }
}
