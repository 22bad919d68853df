//! Scalar characterizations of photon statistics and their Monte Carlo uncertainties.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{multinomial, ClickDistribution, ClickMode, ResponseMatrix};
use crate::error::{Error, Result};
use crate::fock::PhotonDistribution;
use crate::retrieval::{retrieve, RetrievalSettings};
use crate::seeds::derive_seed;

/// Normalized second-order correlation `⟨n(n−1)⟩ / ⟨n⟩²`.
pub fn g2(p: &PhotonDistribution) -> Result<f64> {
    let mean = p.mean();
    if mean <= 0.0 {
        return Err(Error::UndefinedStatistic("g2"));
    }
    Ok(p.factorial_moment2() / (mean * mean))
}

/// Mandel `Q = (⟨(Δn)²⟩ − ⟨n⟩) / ⟨n⟩`.
pub fn mandel_q(p: &PhotonDistribution) -> Result<f64> {
    let mean = p.mean();
    if mean <= 0.0 {
        return Err(Error::UndefinedStatistic("mandel_q"));
    }
    Ok((p.variance() - mean) / mean)
}

/// Photon-number parity `Σ_n (−1)^n p_n`.
pub fn parity(p: &PhotonDistribution) -> f64 {
    p.probs()
        .iter()
        .enumerate()
        .map(|(n, &x)| if n % 2 == 0 { x } else { -x })
        .sum()
}

/// Wigner function at the phase-space origin, `⟨P⟩ / π`.
pub fn wigner_origin(p: &PhotonDistribution) -> f64 {
    parity(p) / PI
}

/// Wigner function of the phase-averaged state at radius `r`:
/// `(1/π) e^{−r²} Σ_n p_n (−1)^n L_n(2r²)`.
pub fn wigner_radial(p: &PhotonDistribution, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("must be >= 0, got {r}")));
    }
    let x = 2.0 * r * r;
    if x == 0.0 {
        return Ok(wigner_origin(p));
    }
    // three-term recurrence: (n+1) L_{n+1} = (2n+1−x) L_n − n L_{n−1}
    let mut prev = 1.0;
    let mut curr = 1.0 - x;
    let mut sum = 0.0;
    for (n, &pn) in p.probs().iter().enumerate() {
        let ln = match n {
            0 => 1.0,
            1 => curr,
            _ => {
                let k = (n - 1) as f64;
                let next = ((2.0 * k + 1.0 - x) * curr - k * prev) / (k + 1.0);
                prev = curr;
                curr = next;
                next
            }
        };
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * pn * ln;
    }
    Ok(sum * (-r * r).exp() / PI)
}

/// `(Σ_n √(p_n q_n))²`; the shorter vector is zero-padded.
pub fn fidelity(p: &PhotonDistribution, q: &PhotonDistribution) -> f64 {
    let len = p.len().max(q.len());
    let overlap: f64 = p
        .padded(len)
        .iter()
        .zip(q.padded(len))
        .map(|(a, b)| (a * b).sqrt())
        .sum();
    (overlap * overlap).min(1.0)
}

/// Total variation distance `Σ_n |p_n − q_n| / 2`; the shorter vector is zero-padded.
pub fn tvd(p: &PhotonDistribution, q: &PhotonDistribution) -> f64 {
    let len = p.len().max(q.len());
    let l1: f64 = p
        .padded(len)
        .iter()
        .zip(q.padded(len))
        .map(|(a, b)| (a - b).abs())
        .sum();
    (l1 / 2.0).min(1.0)
}

/// Per-field sample standard deviations attached to a [`DiagnosticsBundle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainties {
    pub mean: f64,
    pub variance: f64,
    pub g2: f64,
    pub mandel_q: f64,
    pub parity: f64,
    pub wigner_origin: f64,
    pub fidelity: Option<f64>,
    pub tvd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub mean: f64,
    pub variance: f64,
    /// `None` for the vacuum, where `g²` and `Q` are undefined.
    pub g2: Option<f64>,
    pub mandel_q: Option<f64>,
    pub parity: f64,
    pub wigner_origin: f64,
    pub fidelity: Option<f64>,
    pub tvd: Option<f64>,
    pub uncertainties: Option<Uncertainties>,
}

/// Stable column order of the flat CSV/JSON encodings.
pub const BUNDLE_COLUMNS: [&str; 16] = [
    "mean",
    "var",
    "g2",
    "q",
    "parity",
    "w00",
    "fidelity",
    "tvd",
    "mean_std",
    "var_std",
    "g2_std",
    "q_std",
    "parity_std",
    "w00_std",
    "fidelity_std",
    "tvd_std",
];

impl DiagnosticsBundle {
    pub fn compute(p: &PhotonDistribution, reference: Option<&PhotonDistribution>) -> Self {
        let parity = parity(p);
        Self {
            mean: p.mean(),
            variance: p.variance(),
            g2: g2(p).ok(),
            mandel_q: mandel_q(p).ok(),
            parity,
            wigner_origin: parity / PI,
            fidelity: reference.map(|q| fidelity(p, q)),
            tvd: reference.map(|q| tvd(p, q)),
            uncertainties: None,
        }
    }

    /// Values in [`BUNDLE_COLUMNS`] order; absent fields are `None`.
    pub fn flat_values(&self) -> Vec<Option<f64>> {
        let u = self.uncertainties;
        vec![
            Some(self.mean),
            Some(self.variance),
            self.g2,
            self.mandel_q,
            Some(self.parity),
            Some(self.wigner_origin),
            self.fidelity,
            self.tvd,
            u.map(|u| u.mean),
            u.map(|u| u.variance),
            u.map(|u| u.g2),
            u.map(|u| u.mandel_q),
            u.map(|u| u.parity),
            u.map(|u| u.wigner_origin),
            u.and_then(|u| u.fidelity),
            u.and_then(|u| u.tvd),
        ]
    }

    /// Flat JSON object keyed by [`BUNDLE_COLUMNS`]; absent values are `null`.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = BUNDLE_COLUMNS
            .iter()
            .zip(self.flat_values())
            .map(|(k, v)| {
                (
                    k.to_string(),
                    v.map_or(serde_json::Value::Null, |x| x.into()),
                )
            })
            .collect();
        serde_json::Value::Object(map)
    }

    /// Header line plus one data row; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let row: Vec<String> = self
            .flat_values()
            .into_iter()
            .map(|v| v.map(|x| format!("{x:e}")).unwrap_or_default())
            .collect();
        format!("{}\n{}\n", BUNDLE_COLUMNS.join(","), row.join(","))
    }
}

/// Monte Carlo uncertainty of retrieved diagnostics.
///
/// Each trial resamples `R` runs multinomially from the empirical click frequencies,
/// retrieves with `settings`, and evaluates the diagnostics (against `reference` when
/// given). The point values come from retrieving `d` itself; uncertainties are sample
/// standard deviations over trials. Trial seeds are derived from `seed`.
pub fn bootstrap(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
    trials: usize,
    seed: u64,
    reference: Option<&PhotonDistribution>,
) -> Result<DiagnosticsBundle> {
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|t| derive_seed(seed, &[t]))
        .collect();
    bootstrap_with_seeds(d, matrix, settings, &seeds, reference)
}

/// [`bootstrap`] with explicit per-trial resampling seeds.
pub fn bootstrap_with_seeds(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
    seeds: &[u64],
    reference: Option<&PhotonDistribution>,
) -> Result<DiagnosticsBundle> {
    if seeds.len() < 2 {
        return Err(Error::param("trials", "bootstrap needs at least 2 trials"));
    }
    if d.mode() != ClickMode::Counts {
        return Err(Error::param("d", "bootstrap requires click counts"));
    }
    let runs = d.runs().unwrap_or(0);
    let freqs = d.frequencies();
    let point = retrieve(d, matrix, settings)?;
    let mut bundle = DiagnosticsBundle::compute(&point.estimate, reference);

    let samples: Vec<DiagnosticsBundle> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let resampled = multinomial(&mut rng, &freqs, runs)
                .and_then(ClickDistribution::counts)
                .and_then(|r| retrieve(&r, matrix, settings))
                .map_err(|e| Error::Trial {
                    seed: s,
                    source: Box::new(e),
                })?;
            Ok(DiagnosticsBundle::compute(&resampled.estimate, reference))
        })
        .collect::<Result<_>>()?;

    let std_of = |f: &dyn Fn(&DiagnosticsBundle) -> Option<f64>| -> Option<f64> {
        let xs: Vec<f64> = samples.iter().filter_map(f).collect();
        (xs.len() == samples.len()).then(|| sample_std(&xs))
    };
    bundle.uncertainties = Some(Uncertainties {
        mean: sample_std(&samples.iter().map(|b| b.mean).collect::<Vec<_>>()),
        variance: sample_std(&samples.iter().map(|b| b.variance).collect::<Vec<_>>()),
        g2: std_of(&|b| b.g2).unwrap_or(f64::NAN),
        mandel_q: std_of(&|b| b.mandel_q).unwrap_or(f64::NAN),
        parity: sample_std(&samples.iter().map(|b| b.parity).collect::<Vec<_>>()),
        wigner_origin: sample_std(&samples.iter().map(|b| b.wigner_origin).collect::<Vec<_>>()),
        fidelity: std_of(&|b| b.fidelity),
        tvd: std_of(&|b| b.tvd),
    });
    Ok(bundle)
}

/// Unbiased sample standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
