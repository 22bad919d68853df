//! Photon-number distributions of the light sources the detector is tested on.
//!
//! Every law is evaluated in log space up to a finite cutoff, then renormalized.
//! Mass discarded above the cutoff is reported and logged when it exceeds
//! [`TRUNCATION_WARN_MASS`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) == 1` accepted by [`PhotonDistribution::new`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Tail mass above which truncation is logged as a warning.
pub const TRUNCATION_WARN_MASS: f64 = 1e-6;

/// Smallest cutoff picked by [`SourceSpec::suggested_cutoff`].
pub const MIN_DEFAULT_CUTOFF: usize = 50;

/// Photon-number probabilities `p_n` for `n = 0..=cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

impl PhotonDistribution {
    /// Wraps an already normalized probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        check_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { probs: weights })
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(0, cutoff).expect("vacuum fits any cutoff")
    }

    /// The number state `|n⟩`.
    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(Error::param("n", format!("{n} exceeds cutoff {cutoff}")));
        }
        let mut probs = vec![0.0; cutoff + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(cutoff: usize) -> Self {
        Self {
            probs: vec![1.0 / (cutoff + 1) as f64; cutoff + 1],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Largest photon number represented.
    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// `⟨(Δn)²⟩`, evaluated around the mean.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum()
    }

    /// `⟨n(n-1)⟩`.
    pub fn factorial_moment2(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64) * (n as f64 - 1.0) * p)
            .sum()
    }

    /// Copy of the probabilities zero-padded to `len` entries.
    ///
    /// Never truncates: if `len` is shorter than the support the full vector is returned.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut v = self.probs.clone();
        if v.len() < len {
            v.resize(len, 0.0);
        }
        v
    }
}

impl TryFrom<Vec<f64>> for PhotonDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PhotonDistribution> for Vec<f64> {
    fn from(p: PhotonDistribution) -> Self {
        p.probs
    }
}

fn check_entries(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidDistribution(
            "empty probability vector".into(),
        ));
    }
    if let Some((n, p)) = v
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::InvalidDistribution(format!("entry {n} is {p}")));
    }
    Ok(())
}

/// A parametric light source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Poissonian light.
    Coherent { mean: f64 },
    /// Single-mode chaotic light (Bose-Einstein).
    Thermal { mean: f64 },
    /// Mandel-Rice statistics of `modes` independent thermal modes.
    MultimodeThermal { mean: f64, modes: u32 },
    /// Thermal light after `subtractions` heralded photon subtractions; `mean` is the output mean.
    SubtractedThermal { mean: f64, subtractions: u32 },
    /// `photons` single-photon emitters, each delivering its photon with `efficiency`.
    PhotonCluster { photons: u32, efficiency: f64 },
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        let check_mean = |mean: f64| {
            if mean.is_finite() && mean >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    "mean",
                    format!("must be finite and >= 0, got {mean}"),
                ))
            }
        };
        match *self {
            SourceSpec::Coherent { mean } | SourceSpec::Thermal { mean } => check_mean(mean),
            SourceSpec::MultimodeThermal { mean, modes } => {
                check_mean(mean)?;
                if modes == 0 {
                    return Err(Error::param("modes", "must be >= 1"));
                }
                Ok(())
            }
            SourceSpec::SubtractedThermal { mean, .. } => check_mean(mean),
            SourceSpec::PhotonCluster {
                photons,
                efficiency,
            } => {
                if photons == 0 {
                    return Err(Error::param("photons", "must be >= 1"));
                }
                if !(0.0..=1.0).contains(&efficiency) {
                    return Err(Error::param(
                        "efficiency",
                        format!("must lie in [0, 1], got {efficiency}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Mean photon number of the untruncated law.
    pub fn mean(&self) -> f64 {
        match *self {
            SourceSpec::Coherent { mean }
            | SourceSpec::Thermal { mean }
            | SourceSpec::MultimodeThermal { mean, .. }
            | SourceSpec::SubtractedThermal { mean, .. } => mean,
            SourceSpec::PhotonCluster {
                photons,
                efficiency,
            } => photons as f64 * efficiency,
        }
    }

    /// Closed-form `g²` of the untruncated law, `None` when the mean is zero.
    pub fn g2(&self) -> Option<f64> {
        if self.mean() == 0.0 {
            return None;
        }
        Some(match *self {
            SourceSpec::Coherent { .. } => 1.0,
            SourceSpec::Thermal { .. } => 2.0,
            SourceSpec::MultimodeThermal { modes, .. } => 1.0 + 1.0 / modes as f64,
            SourceSpec::SubtractedThermal { subtractions, .. } => {
                (subtractions as f64 + 2.0) / (subtractions as f64 + 1.0)
            }
            SourceSpec::PhotonCluster { photons, .. } => 1.0 - 1.0 / photons as f64,
        })
    }

    /// Smallest cutoff (at least [`MIN_DEFAULT_CUTOFF`]) leaving less than `1e-9` in the tail.
    pub fn suggested_cutoff(&self) -> usize {
        if let SourceSpec::PhotonCluster { photons, .. } = *self {
            return MIN_DEFAULT_CUTOFF.max(photons as usize);
        }
        let mut cutoff = MIN_DEFAULT_CUTOFF;
        loop {
            match self.raw_pmf(cutoff) {
                Ok(raw) if 1.0 - raw.iter().sum::<f64>() < 1e-9 => return cutoff,
                Ok(_) if cutoff < 100_000 => cutoff += cutoff / 2,
                _ => return cutoff,
            }
        }
    }

    /// Evaluates the law on `0..=cutoff`, reporting the discarded tail mass.
    pub fn build(&self, cutoff: usize) -> Result<Truncated> {
        let raw = self.raw_pmf(cutoff)?;
        let kept: f64 = raw.iter().sum();
        let discarded_mass = (1.0 - kept).max(0.0);
        if discarded_mass > TRUNCATION_WARN_MASS {
            log::warn!(
                "{self}: cutoff {cutoff} discards {discarded_mass:.3e} of the probability mass"
            );
        }
        Ok(Truncated {
            distribution: PhotonDistribution::from_weights(raw)?,
            discarded_mass,
        })
    }

    pub fn distribution(&self, cutoff: usize) -> Result<PhotonDistribution> {
        self.build(cutoff).map(|t| t.distribution)
    }

    /// Unnormalized pmf values of the untruncated law on `0..=cutoff`.
    fn raw_pmf(&self, cutoff: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let raw = match *self {
            SourceSpec::Coherent { mean } => {
                require_cutoff(cutoff, 1)?;
                poisson_pmf(mean, cutoff)
            }
            SourceSpec::Thermal { mean } => negative_binomial_pmf(1, mean, cutoff),
            SourceSpec::MultimodeThermal { mean, modes } => {
                negative_binomial_pmf(modes, mean, cutoff)
            }
            SourceSpec::SubtractedThermal { mean, subtractions } => {
                negative_binomial_pmf(subtractions + 1, mean, cutoff)
            }
            SourceSpec::PhotonCluster {
                photons,
                efficiency,
            } => {
                if cutoff < photons as usize {
                    return Err(Error::param(
                        "cutoff",
                        format!("{cutoff} is below the cluster size {photons}"),
                    ));
                }
                binomial_pmf(photons as usize, efficiency, cutoff)
            }
        };
        Ok(raw)
    }
}

/// Outcome of evaluating a source law up to a cutoff.
#[derive(Debug, Clone)]
pub struct Truncated {
    /// Renormalized distribution on `0..=cutoff`.
    pub distribution: PhotonDistribution,
    /// Probability mass of the untruncated law above the cutoff.
    pub discarded_mass: f64,
}

fn require_cutoff(cutoff: usize, min: usize) -> Result<()> {
    if cutoff < min {
        return Err(Error::param("cutoff", format!("must be >= {min}")));
    }
    Ok(())
}

/// Compact textual form used on the command line, e.g. `coherent:4.95`,
/// `multimode:5:2`, `subtracted:5.77:2`, `cluster:9:0.55`.
impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SourceSpec::Coherent { mean } => write!(f, "coherent:{mean}"),
            SourceSpec::Thermal { mean } => write!(f, "thermal:{mean}"),
            SourceSpec::MultimodeThermal { mean, modes } => write!(f, "multimode:{mean}:{modes}"),
            SourceSpec::SubtractedThermal { mean, subtractions } => {
                write!(f, "subtracted:{mean}:{subtractions}")
            }
            SourceSpec::PhotonCluster {
                photons,
                efficiency,
            } => write!(f, "cluster:{photons}:{efficiency}"),
        }
    }
}

impl FromStr for SourceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("source `{s}` is missing field {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("source `{s}`: {e}")))
        };
        let int = |i: usize| -> Result<u32> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("source `{s}` is missing field {i}")))?
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("source `{s}`: {e}")))
        };
        let arity = |n: usize| -> Result<()> {
            if parts.len() != n + 1 {
                return Err(Error::Parse(format!(
                    "source `{s}` expects {n} parameter(s)"
                )));
            }
            Ok(())
        };
        let spec = match parts[0] {
            "coherent" | "poisson" => {
                arity(1)?;
                SourceSpec::Coherent { mean: num(1)? }
            }
            "thermal" => {
                arity(1)?;
                SourceSpec::Thermal { mean: num(1)? }
            }
            "multimode" | "multimode_thermal" => {
                arity(2)?;
                SourceSpec::MultimodeThermal {
                    mean: num(1)?,
                    modes: int(2)?,
                }
            }
            "subtracted" | "subtracted_thermal" => {
                arity(2)?;
                SourceSpec::SubtractedThermal {
                    mean: num(1)?,
                    subtractions: int(2)?,
                }
            }
            "cluster" | "photon_cluster" => {
                arity(2)?;
                SourceSpec::PhotonCluster {
                    photons: int(1)?,
                    efficiency: num(2)?,
                }
            }
            other => {
                return Err(Error::UnknownVariant {
                    what: "source kind",
                    value: other.to_string(),
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn coherent(mean: f64, cutoff: usize) -> Result<PhotonDistribution> {
    SourceSpec::Coherent { mean }.distribution(cutoff)
}

pub fn thermal(mean: f64, cutoff: usize) -> Result<PhotonDistribution> {
    SourceSpec::Thermal { mean }.distribution(cutoff)
}

pub fn multimode_thermal(mean: f64, modes: u32, cutoff: usize) -> Result<PhotonDistribution> {
    SourceSpec::MultimodeThermal { mean, modes }.distribution(cutoff)
}

pub fn subtracted_thermal(
    mean: f64,
    subtractions: u32,
    cutoff: usize,
) -> Result<PhotonDistribution> {
    SourceSpec::SubtractedThermal { mean, subtractions }.distribution(cutoff)
}

pub fn photon_cluster(photons: u32, efficiency: f64, cutoff: usize) -> Result<PhotonDistribution> {
    SourceSpec::PhotonCluster {
        photons,
        efficiency,
    }
    .distribution(cutoff)
}

/// Binomial thinning: every photon independently survives with probability `transmittance`.
pub fn apply_loss(p: &PhotonDistribution, transmittance: f64) -> Result<PhotonDistribution> {
    if !(0.0..=1.0).contains(&transmittance) {
        return Err(Error::param(
            "transmittance",
            format!("must lie in [0, 1], got {transmittance}"),
        ));
    }
    if transmittance == 1.0 {
        return Ok(p.clone());
    }
    let cutoff = p.cutoff();
    let ln_fact = ln_factorials(cutoff);
    let mut out = vec![0.0; cutoff + 1];
    for (n, &pn) in p.probs().iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (k, slot) in out.iter_mut().enumerate().take(n + 1) {
            let ln_w = ln_fact[n] - ln_fact[k] - ln_fact[n - k]
                + xlny(k as f64, transmittance)
                + xlny((n - k) as f64, 1.0 - transmittance);
            *slot += pn * ln_w.exp();
        }
    }
    PhotonDistribution::from_weights(out)
}

/// `ln k!` for `k = 0..=n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// `x ln y` with the convention `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn poisson_pmf(mean: f64, cutoff: usize) -> Vec<f64> {
    let ln_fact = ln_factorials(cutoff);
    (0..=cutoff)
        .map(|n| (xlny(n as f64, mean) - mean - ln_fact[n]).exp())
        .collect()
}

/// Negative binomial with integer shape `shape` and the given mean.
fn negative_binomial_pmf(shape: u32, mean: f64, cutoff: usize) -> Vec<f64> {
    let r = shape as usize;
    let ratio = mean / (mean + r as f64);
    let ln_fact = ln_factorials(cutoff + r);
    (0..=cutoff)
        .map(|n| {
            let ln_coeff = ln_fact[n + r - 1] - ln_fact[r - 1] - ln_fact[n];
            (ln_coeff + xlny(n as f64, ratio) + xlny(r as f64, 1.0 - ratio)).exp()
        })
        .collect()
}

fn binomial_pmf(trials: usize, success: f64, cutoff: usize) -> Vec<f64> {
    let ln_fact = ln_factorials(trials);
    (0..=cutoff)
        .map(|n| {
            if n > trials {
                return 0.0;
            }
            let ln_coeff = ln_fact[trials] - ln_fact[n] - ln_fact[trials - n];
            (ln_coeff + xlny(n as f64, success) + xlny((trials - n) as f64, 1.0 - success)).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g2(p: &PhotonDistribution) -> f64 {
        p.factorial_moment2() / p.mean().powi(2)
    }

    #[test]
    fn coherent_limits() {
        let vac = coherent(0.0, 10).unwrap();
        assert_eq!(vac.probs()[0], 1.0);
        assert!(vac.probs()[1..].iter().all(|&p| p == 0.0));

        let p = coherent(1.0, 60).unwrap();
        assert_abs_diff_eq!(p.probs()[0], (-1.0f64).exp(), epsilon = 1e-15);

        let p = coherent(4.95, 50).unwrap();
        assert_abs_diff_eq!(g2(&p), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.variance() - p.mean(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn thermal_values() {
        let p = thermal(1.0, 80).unwrap();
        assert_abs_diff_eq!(p.probs()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.probs()[1], 0.25, epsilon = 1e-15);

        let p = thermal(5.0, 400).unwrap();
        assert_abs_diff_eq!(p.variance(), 30.0, epsilon = 1e-9);

        let p = thermal(4.93, 400).unwrap();
        assert_abs_diff_eq!(g2(&p), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn single_mode_limits_coincide_with_thermal() {
        let t = thermal(3.2, 120).unwrap();
        let mm = multimode_thermal(3.2, 1, 120).unwrap();
        let sub = subtracted_thermal(3.2, 0, 120).unwrap();
        for n in 0..=120 {
            assert_abs_diff_eq!(t.probs()[n], mm.probs()[n], epsilon = 1e-15);
            assert_abs_diff_eq!(t.probs()[n], sub.probs()[n], epsilon = 1e-15);
        }
    }

    #[test]
    fn subtracted_thermal_table_values() {
        let p = subtracted_thermal(5.77, 2, 200).unwrap();
        assert_abs_diff_eq!(g2(&p), 4.0 / 3.0, epsilon = 1e-9);
        let p60 = subtracted_thermal(5.77, 2, 60).unwrap();
        assert_abs_diff_eq!(p60.variance(), 16.87, epsilon = 5e-3);
    }

    #[test]
    fn photon_cluster_moments() {
        let p = photon_cluster(1, 1.0, 5).unwrap();
        assert_eq!(p.probs()[1], 1.0);

        let p = photon_cluster(9, 0.55, 50).unwrap();
        assert_abs_diff_eq!(p.mean(), 4.95, epsilon = 1e-12);
        assert_abs_diff_eq!(p.variance(), 9.0 * 0.55 * 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(g2(&p), 8.0 / 9.0, epsilon = 1e-12);

        assert!(photon_cluster(9, 0.5, 8).is_err());
    }

    #[test]
    fn loss_limits_and_composition() {
        let p = thermal(2.0, 60).unwrap();
        assert_eq!(apply_loss(&p, 1.0).unwrap(), p);
        let v = apply_loss(&p, 0.0).unwrap();
        assert_abs_diff_eq!(v.probs()[0], 1.0, epsilon = 1e-15);

        let ideal = photon_cluster(9, 1.0, 20).unwrap();
        let lossy = apply_loss(&ideal, 0.55).unwrap();
        let direct = photon_cluster(9, 0.55, 20).unwrap();
        for (a, b) in lossy.probs().iter().zip(direct.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(coherent(-1.0, 10).is_err());
        assert!(coherent(1.0, 0).is_err());
        assert!(multimode_thermal(1.0, 0, 10).is_err());
        assert!(photon_cluster(0, 0.5, 10).is_err());
        assert!(photon_cluster(2, 1.5, 10).is_err());
        assert!(apply_loss(&PhotonDistribution::vacuum(3), -0.1).is_err());
        assert!(PhotonDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(PhotonDistribution::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn truncation_reports_tail() {
        let t = SourceSpec::Coherent { mean: 20.0 }.build(20).unwrap();
        assert!(t.discarded_mass > 0.4);
        let t = SourceSpec::Coherent { mean: 5.0 }.build(60).unwrap();
        assert!(t.discarded_mass < 1e-12);
        assert_abs_diff_eq!(
            t.distribution.probs().iter().sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn suggested_cutoff_covers_tail() {
        let s = SourceSpec::Thermal { mean: 20.0 };
        let c = s.suggested_cutoff();
        assert!(c > 50);
        assert!(s.build(c).unwrap().discarded_mass < 1e-9);
        assert_eq!(SourceSpec::Coherent { mean: 1.0 }.suggested_cutoff(), 50);
    }

    #[test]
    fn source_strings_round_trip() {
        for s in [
            "coherent:10",
            "thermal:4.93",
            "multimode:5:2",
            "subtracted:5.77:2",
            "cluster:9:0.55",
        ] {
            let spec: SourceSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<SourceSpec>().unwrap(), spec);
        }
        assert!(matches!(
            "laser:3".parse::<SourceSpec>(),
            Err(Error::UnknownVariant { .. })
        ));
        assert!("coherent".parse::<SourceSpec>().is_err());
    }
}
