//! Photon statistics retrieval from click data.
//!
//! Three estimators are provided:
//!
//! * [`direct_inverse`]: solves the truncated linear system (pseudoinverse when
//!   underdetermined). Fast, but the result is not constrained to be a distribution.
//! * [`em_retrieve`]: the multiplicative maximum-likelihood fixed-point iteration
//!   `p ← Π(p) ∘ p` with `Π_n = Σ_m d_m C_mn / (C p)_m`.
//! * [`eme_retrieve`]: the same iteration with an entropy correction,
//!   `p_n ← Π_n p_n − λ (ln p_n − S) p_n`, `S = Σ_n p_n ln p_n`.
//!
//! Both iterative methods start from the uniform distribution by default and stop once
//! the Euclidean distance between successive iterates drops to `ε`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detector::{ClickDistribution, ResponseMatrix};
use crate::error::{Error, Result};
use crate::fock::PhotonDistribution;

/// Entropy weight used unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 1e-3;
/// Stop distance used unless configured otherwise.
pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const DEFAULT_CUTOFF: usize = 50;
pub const DEFAULT_MAX_ITERATIONS: u64 = 10_000_000;
/// Singular values below this fraction of the largest are discarded by the pseudoinverse.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DirectInverse,
    Em,
    Eme,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "direct_inverse" | "inverse" | "pinv" => Ok(Algorithm::DirectInverse),
            "em" => Ok(Algorithm::Em),
            "eme" => Ok(Algorithm::Eme),
            _ => Err(Error::UnknownVariant {
                what: "algorithm",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    #[default]
    Uniform,
    Custom(PhotonDistribution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSettings {
    pub algorithm: Algorithm,
    /// Entropy weight λ (EME only).
    pub lambda: f64,
    /// Stop once successive iterates are within this Euclidean distance.
    pub epsilon: f64,
    /// Photon-number cutoff of the response matrix built for this retrieval.
    pub cutoff: usize,
    pub max_iterations: u64,
    pub init: InitPolicy,
    /// Record likelihood and step-distance traces every `k` iterations.
    pub trace_every: Option<u64>,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Eme,
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            cutoff: DEFAULT_CUTOFF,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            init: InitPolicy::Uniform,
            trace_every: None,
        }
    }
}

impl RetrievalSettings {
    pub fn em() -> Self {
        Self {
            algorithm: Algorithm::Em,
            ..Self::default()
        }
    }

    pub fn eme(lambda: f64) -> Self {
        Self {
            algorithm: Algorithm::Eme,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_traces(mut self, every: u64) -> Self {
        self.trace_every = Some(every.max(1));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param(
                "epsilon",
                format!("must be > 0, got {}", self.epsilon),
            ));
        }
        if self.cutoff < 1 {
            return Err(Error::param("cutoff", "must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub algorithm: Algorithm,
    pub estimate: PhotonDistribution,
    /// Number of update steps applied to the initial distribution.
    pub iterations: u64,
    pub stop_reason: StopReason,
    /// Distance between the last two iterates.
    pub final_step_distance: f64,
    /// Entries driven below zero by the entropy term and clamped.
    pub clamp_events: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub likelihood_trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_trace: Option<Vec<f64>>,
}

impl RetrievalReport {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

/// Solves `C p = d` on the truncated photon-number range.
///
/// A square system is solved exactly; otherwise the minimum-norm least-squares solution
/// is returned. The output may contain negative entries.
pub fn direct_inverse(d: &ClickDistribution, matrix: &ResponseMatrix) -> Result<Vec<f64>> {
    check_rows(d, matrix)?;
    let a = DMatrix::from_row_slice(matrix.rows(), matrix.cols(), matrix.as_slice());
    let b = DVector::from_vec(d.frequencies());
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let threshold = PINV_RELATIVE_CUTOFF * sigma_max;
    if matrix.rows() == matrix.cols() {
        let sigma_min = svd.singular_values.min();
        if !(sigma_min > threshold) {
            return Err(Error::Singular { pivot: sigma_min });
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or(Error::Singular { pivot: sigma_min })?;
        return Ok(x.iter().copied().collect());
    }
    let pinv = svd
        .pseudo_inverse(threshold)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok((pinv * b).iter().copied().collect())
}

/// Maximum-likelihood retrieval by plain expectation maximization.
pub fn em_retrieve(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
) -> Result<RetrievalReport> {
    iterate(d, matrix, settings, 0.0, Algorithm::Em)
}

/// Expectation maximization with entropy regularization of weight `settings.lambda`.
pub fn eme_retrieve(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
) -> Result<RetrievalReport> {
    iterate(d, matrix, settings, settings.lambda, Algorithm::Eme)
}

/// Dispatches on `settings.algorithm` for the iterative estimators.
pub fn retrieve(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
) -> Result<RetrievalReport> {
    match settings.algorithm {
        Algorithm::Em => em_retrieve(d, matrix, settings),
        Algorithm::Eme => eme_retrieve(d, matrix, settings),
        Algorithm::DirectInverse => Err(Error::param(
            "algorithm",
            "direct inversion yields a signed vector; call direct_inverse",
        )),
    }
}

/// `Σ_m d_m ln (C p)_m` with `d` normalized.
pub fn log_likelihood(
    p: &PhotonDistribution,
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
) -> Result<f64> {
    check_rows(d, matrix)?;
    check_cols(p.len(), matrix)?;
    let mut c = vec![0.0; matrix.rows()];
    matrix.apply(p.probs(), &mut c);
    Ok(likelihood_of(&d.frequencies(), &c))
}

/// `max_n |Π_n p_n − p_n|` over the support of `p`; zero exactly at an EM fixed point.
pub fn fixed_point_residual(
    p: &PhotonDistribution,
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
) -> Result<f64> {
    check_rows(d, matrix)?;
    check_cols(p.len(), matrix)?;
    let mut ws = Workspace::new(matrix);
    ws.kernel(&d.frequencies(), matrix, p.probs())?;
    Ok(p.probs()
        .iter()
        .zip(&ws.kernel)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &k)| (k * p - p).abs())
        .fold(0.0, f64::max))
}

fn check_rows(d: &ClickDistribution, matrix: &ResponseMatrix) -> Result<()> {
    if d.values().len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            found: d.values().len(),
            context: "click vector length vs channels + 1",
        });
    }
    Ok(())
}

fn check_cols(len: usize, matrix: &ResponseMatrix) -> Result<()> {
    if len != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            found: len,
            context: "photon distribution length vs cutoff + 1",
        });
    }
    Ok(())
}

fn likelihood_of(d: &[f64], c: &[f64]) -> f64 {
    d.iter()
        .zip(c)
        .filter(|(&d, _)| d > 0.0)
        .map(|(&d, &c)| d * c.ln())
        .sum()
}

/// Scratch buffers reused across iterations.
struct Workspace {
    clicks: Vec<f64>,
    ratio: Vec<f64>,
    kernel: Vec<f64>,
}

impl Workspace {
    fn new(matrix: &ResponseMatrix) -> Self {
        Self {
            clicks: vec![0.0; matrix.rows()],
            ratio: vec![0.0; matrix.rows()],
            kernel: vec![0.0; matrix.cols()],
        }
    }

    /// Fills `self.clicks = C p` and `self.kernel = Π(p)`.
    fn kernel(&mut self, d: &[f64], matrix: &ResponseMatrix, p: &[f64]) -> Result<()> {
        matrix.apply(p, &mut self.clicks);
        for (m, ((r, &dm), &cm)) in self.ratio.iter_mut().zip(d).zip(&self.clicks).enumerate() {
            *r = if dm == 0.0 {
                0.0
            } else if cm > 0.0 {
                dm / cm
            } else {
                return Err(Error::ModelSupport { m, data: dm });
            };
        }
        self.kernel.iter_mut().for_each(|k| *k = 0.0);
        for (m, &r) in self.ratio.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let start = m.min(self.kernel.len());
            for (k, &c) in self.kernel[start..].iter_mut().zip(&matrix.row(m)[start..]) {
                *k += r * c;
            }
        }
        Ok(())
    }
}

fn initial_distribution(settings: &RetrievalSettings, matrix: &ResponseMatrix) -> Result<Vec<f64>> {
    match &settings.init {
        InitPolicy::Uniform => Ok(PhotonDistribution::uniform(matrix.cutoff()).into_probs()),
        InitPolicy::Custom(p) => {
            check_cols(p.len(), matrix)?;
            if p.probs().iter().any(|&x| x <= 0.0) {
                return Err(Error::param(
                    "init",
                    "initial distribution must be strictly positive",
                ));
            }
            Ok(p.probs().to_vec())
        }
    }
}

fn iterate(
    d: &ClickDistribution,
    matrix: &ResponseMatrix,
    settings: &RetrievalSettings,
    lambda: f64,
    algorithm: Algorithm,
) -> Result<RetrievalReport> {
    settings.validate()?;
    check_rows(d, matrix)?;
    let data = d.frequencies();
    let mut current = initial_distribution(settings, matrix)?;
    let mut next = vec![0.0; current.len()];
    let mut ws = Workspace::new(matrix);
    let mut clamp_events = 0u64;
    let trace_every = settings.trace_every;
    let mut likelihood_trace = trace_every.map(|_| Vec::new());
    let mut distance_trace = trace_every.map(|_| Vec::new());

    let mut iterations = 0u64;
    let mut distance = f64::INFINITY;
    let mut stop_reason = StopReason::IterationCap;
    while iterations < settings.max_iterations {
        ws.kernel(&data, matrix, &current)?;
        let record = trace_every.is_some_and(|k| iterations % k == 0);
        if record {
            if let Some(t) = likelihood_trace.as_mut() {
                t.push(likelihood_of(&data, &ws.clicks));
            }
        }

        for ((x, &k), &p) in next.iter_mut().zip(&ws.kernel).zip(&current) {
            *x = k * p;
        }
        if lambda != 0.0 {
            // S = Σ p ln p with 0 ln 0 = 0
            let entropy: f64 = current
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum();
            for (x, &p) in next.iter_mut().zip(&current) {
                if p > 0.0 {
                    *x -= lambda * (p.ln() - entropy) * p;
                }
            }
        }
        let mut total = 0.0;
        for x in next.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
                clamp_events += 1;
            } else if *x < f64::MIN_POSITIVE {
                // flush subnormals; they carry no information and stall the FPU
                *x = 0.0;
            }
            total += *x;
        }
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution(
                "iterate collapsed to zero mass".into(),
            ));
        }
        let mut sq = 0.0;
        for (x, &p) in next.iter_mut().zip(&current) {
            *x /= total;
            sq += (*x - p) * (*x - p);
        }
        distance = sq.sqrt();
        if record {
            if let Some(t) = distance_trace.as_mut() {
                t.push(distance);
            }
        }
        iterations += 1;
        std::mem::swap(&mut current, &mut next);
        if distance <= settings.epsilon {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    Ok(RetrievalReport {
        algorithm,
        estimate: PhotonDistribution::new(current)?,
        iterations,
        stop_reason,
        final_step_distance: distance,
        clamp_events,
        likelihood_trace,
        distance_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{forward, DetectorConfig};
    use crate::fock;

    fn matrix(channels: usize, eta: f64, cutoff: usize) -> ResponseMatrix {
        ResponseMatrix::new(DetectorConfig::new(channels, eta).unwrap(), cutoff).unwrap()
    }

    #[test]
    fn direct_inverse_exact_vacuum() {
        let c = matrix(10, 0.5, 10);
        let d = forward(&c, &PhotonDistribution::vacuum(10)).unwrap();
        let p = direct_inverse(&d, &c).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9);
        assert!(p[1..].iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn direct_inverse_identity_response() {
        let c = matrix(1, 1.0, 1);
        let d = ClickDistribution::probabilities(vec![0.3, 0.7]).unwrap();
        let p = direct_inverse(&d, &c).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn direct_inverse_underdetermined_is_minimum_norm_solution() {
        let c = matrix(4, 0.6, 12);
        let truth = fock::thermal(1.0, 12).unwrap();
        let d = forward(&c, &truth).unwrap();
        let p = direct_inverse(&d, &c).unwrap();
        let mut back = vec![0.0; 5];
        c.apply(&p, &mut back);
        for (a, b) in back.iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(norm(&p) <= norm(truth.probs()) + 1e-12);
    }

    #[test]
    fn em_recovers_interior_truth_on_square_system() {
        let c = matrix(4, 0.8, 4);
        let truth = PhotonDistribution::new(vec![0.1, 0.3, 0.25, 0.2, 0.15]).unwrap();
        let d = forward(&c, &truth).unwrap();
        let r = em_retrieve(&d, &c, &RetrievalSettings::em().with_epsilon(1e-14)).unwrap();
        assert!(r.converged());
        for (a, b) in r.estimate.probs().iter().zip(truth.probs()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_lambda_matches_em_bitwise() {
        let c = matrix(10, 0.5, 30);
        let d = forward(&c, &fock::thermal(2.0, 30).unwrap()).unwrap();
        let base = RetrievalSettings {
            max_iterations: 500,
            ..RetrievalSettings::default()
        };
        let em = em_retrieve(&d, &c, &base).unwrap();
        let eme = eme_retrieve(
            &d,
            &c,
            &RetrievalSettings {
                lambda: 0.0,
                ..base
            },
        )
        .unwrap();
        assert_eq!(em.estimate, eme.estimate);
        assert_eq!(em.iterations, eme.iterations);
    }

    #[test]
    fn missing_model_support_is_reported() {
        let c = matrix(3, 1.0, 1);
        // two clicks are impossible with at most one photon
        let d = ClickDistribution::probabilities(vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        let err = em_retrieve(&d, &c, &RetrievalSettings::em()).unwrap_err();
        assert!(matches!(err, Error::ModelSupport { m: 2, .. }));
    }

    #[test]
    fn iteration_cap_is_signalled() {
        let c = matrix(10, 0.5, 50);
        let d = forward(&c, &fock::coherent(3.0, 50).unwrap()).unwrap();
        let s = RetrievalSettings {
            max_iterations: 5,
            ..RetrievalSettings::default()
        };
        let r = eme_retrieve(&d, &c, &s).unwrap();
        assert_eq!(r.stop_reason, StopReason::IterationCap);
        assert_eq!(r.iterations, 5);
    }

    #[test]
    fn large_lambda_clamps_and_stays_normalized() {
        let c = matrix(10, 0.5, 30);
        let d = forward(&c, &fock::photon_cluster(1, 0.55, 30).unwrap()).unwrap();
        let s = RetrievalSettings {
            lambda: 5.0,
            max_iterations: 200,
            ..RetrievalSettings::default()
        };
        let r = eme_retrieve(&d, &c, &s).unwrap();
        assert!(r.clamp_events > 0);
        let total: f64 = r.estimate.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r.estimate.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn fixed_point_residual_distinguishes_fixed_points() {
        let c = matrix(10, 0.5, 50);
        let truth = fock::coherent(4.0, 50).unwrap();
        let d = forward(&c, &truth).unwrap();
        let uniform = PhotonDistribution::uniform(50);
        assert!(fixed_point_residual(&uniform, &d, &c).unwrap() > 1e-12);
        assert!(fixed_point_residual(&truth, &d, &c).unwrap() < 1e-12);

        let s = RetrievalSettings::em().with_epsilon(1e-12);
        let r = em_retrieve(&d, &c, &s).unwrap();
        assert!(r.converged());
        assert!(fixed_point_residual(&r.estimate, &d, &c).unwrap() <= 10.0 * s.epsilon);
    }

    #[test]
    fn settings_validation() {
        let c = matrix(2, 0.5, 4);
        let d = ClickDistribution::probabilities(vec![0.5, 0.3, 0.2]).unwrap();
        let bad = RetrievalSettings {
            epsilon: 0.0,
            ..RetrievalSettings::default()
        };
        assert!(eme_retrieve(&d, &c, &bad).is_err());
        let bad_init = RetrievalSettings {
            init: InitPolicy::Custom(PhotonDistribution::vacuum(4)),
            ..RetrievalSettings::default()
        };
        assert!(eme_retrieve(&d, &c, &bad_init).is_err());
        let wrong = ClickDistribution::probabilities(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            em_retrieve(&wrong, &c, &RetrievalSettings::em()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
