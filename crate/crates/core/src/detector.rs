//! Balanced multiplexed detector: response matrix, forward click model, and click sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::PhotonDistribution;

/// Negative round-off below this magnitude is zeroed when evaluating the closed form.
const NEGATIVE_RESIDUAL_TOL: f64 = 1e-12;

/// `M` on/off channels fed by a balanced splitter with global efficiency `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    channels: usize,
    efficiency: f64,
}

impl DetectorConfig {
    pub fn new(channels: usize, efficiency: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::param("channels", "must be >= 1"));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::param(
                "efficiency",
                format!("must lie in (0, 1], got {efficiency}"),
            ));
        }
        Ok(Self {
            channels,
            efficiency,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }
}

impl Default for DetectorConfig {
    /// Ten channels at η = 0.5.
    fn default() -> Self {
        Self {
            channels: 10,
            efficiency: 0.5,
        }
    }
}

/// Conditional click probabilities `C[m][n] = P(m clicks | n photons)`.
///
/// Stored row-major with `channels + 1` rows and `cutoff + 1` columns. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    config: DetectorConfig,
    cutoff: usize,
    entries: Vec<f64>,
}

impl ResponseMatrix {
    /// Builds the matrix by photon-by-photon propagation of the occupancy distribution.
    ///
    /// Each incoming photon is lost with probability `1 - η`, lands in an already firing
    /// channel with probability `m η / M`, or opens a new one with probability
    /// `(M - m) η / M`. All terms are nonnegative, so the result is stable for any `M`, `n`.
    pub fn new(config: DetectorConfig, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let rows = config.channels + 1;
        let cols = cutoff + 1;
        let m_ch = config.channels as f64;
        let eta = config.efficiency;
        let mut entries = vec![0.0; rows * cols];
        let mut column = vec![0.0; rows];
        column[0] = 1.0;
        for n in 0..cols {
            for (m, &v) in column.iter().enumerate() {
                entries[m * cols + n] = v;
            }
            // next photon; walk m downwards so column[m - 1] is still the old value
            for m in (0..rows).rev() {
                let stay = column[m] * ((1.0 - eta) + m as f64 * eta / m_ch);
                let open = if m > 0 {
                    column[m - 1] * (m_ch - (m - 1) as f64) * eta / m_ch
                } else {
                    0.0
                };
                column[m] = stay + open;
            }
        }
        Ok(Self {
            config,
            cutoff,
            entries,
        })
    }

    /// Builds the matrix from the inclusion-exclusion closed form
    /// `C[m][n] = binom(M, m) Σ_j (-1)^j binom(m, j) [(1-η) + (m-j)η/M]^n`,
    /// using `(η/M)^n M!/(M-n)!` on the diagonal and compensated summation elsewhere.
    ///
    /// The alternating sum loses precision once `binom(M, m) 2^m` approaches `1/ε_machine`;
    /// prefer [`ResponseMatrix::new`] for large `M`.
    pub fn from_closed_form(config: DetectorConfig, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let rows = config.channels + 1;
        let cols = cutoff + 1;
        let m_ch = config.channels as f64;
        let eta = config.efficiency;
        let mut entries = vec![0.0; rows * cols];
        for m in 0..rows {
            for n in m..cols {
                let value = if m == n {
                    // (η/M)^n · M!/(M-n)!
                    (0..n).fold(1.0, |acc, k| acc * (m_ch - k as f64) * eta / m_ch)
                } else {
                    let mut sum = NeumaierSum::default();
                    for j in 0..=m {
                        let base = (1.0 - eta) + (m - j) as f64 * eta / m_ch;
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        sum.add(sign * binomial(m, j) * base.powi(n as i32));
                    }
                    binomial(config.channels, m) * sum.total()
                };
                entries[m * cols + n] = clamp_probability(value);
            }
        }
        Ok(Self {
            config,
            cutoff,
            entries,
        })
    }

    pub fn config(&self) -> DetectorConfig {
        self.config
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    /// Largest photon number (last column index).
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn rows(&self) -> usize {
        self.config.channels + 1
    }

    pub fn cols(&self) -> usize {
        self.cutoff + 1
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m * self.cols() + n]
    }

    /// Row `m`, i.e. `C[m][0..=cutoff]`.
    pub fn row(&self, m: usize) -> &[f64] {
        let cols = self.cols();
        &self.entries[m * cols..(m + 1) * cols]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// `c = C p` for a raw vector of length `cutoff + 1`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        for (m, slot) in out.iter_mut().enumerate() {
            // C[m][n] = 0 for n < m
            let start = m.min(p.len());
            *slot = self.row(m)[start..]
                .iter()
                .zip(&p[start..])
                .map(|(c, p)| c * p)
                .sum();
        }
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 1 {
        return Err(Error::param("cutoff", "must be >= 1"));
    }
    Ok(())
}

fn clamp_probability(v: f64) -> f64 {
    if v < 0.0 && v > -NEGATIVE_RESIDUAL_TOL {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Whether a [`ClickDistribution`] holds probabilities or raw run counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickMode {
    Probabilities,
    Counts,
}

/// Click statistics over `0..=M` firing channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickDistribution {
    values: Vec<f64>,
    mode: ClickMode,
}

impl ClickDistribution {
    pub fn probabilities(values: Vec<f64>) -> Result<Self> {
        check_clicks(&values)?;
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > crate::fock::NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "click probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            values,
            mode: ClickMode::Probabilities,
        })
    }

    pub fn counts(counts: Vec<u64>) -> Result<Self> {
        let values: Vec<f64> = counts.into_iter().map(|c| c as f64).collect();
        check_clicks(&values)?;
        if values.iter().sum::<f64>() == 0.0 {
            return Err(Error::InvalidDistribution("no runs recorded".into()));
        }
        Ok(Self {
            values,
            mode: ClickMode::Counts,
        })
    }

    /// Relative frequencies that need not sum exactly to one (e.g. rounded published data).
    pub fn unnormalized(values: Vec<f64>) -> Result<Self> {
        check_clicks(&values)?;
        if !(values.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidDistribution("click data sum to zero".into()));
        }
        Ok(Self {
            values,
            mode: ClickMode::Probabilities,
        })
    }

    pub fn mode(&self) -> ClickMode {
        self.mode
    }

    /// Number of channels `M`.
    pub fn channels(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total number of runs in counts mode.
    pub fn runs(&self) -> Option<u64> {
        match self.mode {
            ClickMode::Counts => Some(self.values.iter().sum::<f64>().round() as u64),
            ClickMode::Probabilities => None,
        }
    }

    /// Values divided by their sum.
    pub fn frequencies(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        self.values.iter().map(|v| v / total).collect()
    }

    /// Expected number of firing channels.
    pub fn mean_clicks(&self) -> f64 {
        self.frequencies()
            .iter()
            .enumerate()
            .map(|(m, c)| m as f64 * c)
            .sum()
    }
}

fn check_clicks(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidDistribution("empty click vector".into()));
    }
    if let Some((m, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "click entry {m} is {v}"
        )));
    }
    Ok(())
}

/// `c_m = Σ_n C[m][n] p_n`.
pub fn forward(matrix: &ResponseMatrix, p: &PhotonDistribution) -> Result<ClickDistribution> {
    if p.len() != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            found: p.len(),
            context: "photon distribution length vs response matrix columns",
        });
    }
    let mut c = vec![0.0; matrix.rows()];
    matrix.apply(p.probs(), &mut c);
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|v| *v /= total);
    Ok(ClickDistribution {
        values: c,
        mode: ClickMode::Probabilities,
    })
}

/// Draws `runs` independent detector outcomes from the click probabilities `c`.
///
/// Deterministic in `seed`; distinct seeds give independent streams.
pub fn sample_clicks(c: &ClickDistribution, runs: u64, seed: u64) -> Result<ClickDistribution> {
    if c.mode != ClickMode::Probabilities {
        return Err(Error::param("c", "sampling requires click probabilities"));
    }
    if runs == 0 {
        return Err(Error::param("runs", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = multinomial(&mut rng, &c.frequencies(), runs)?;
    ClickDistribution::counts(counts)
}

/// Multinomial draw via successive conditional binomials.
pub(crate) fn multinomial<R: Rng>(rng: &mut R, probs: &[f64], trials: u64) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = trials;
    let mut mass_left = 1.0;
    let last = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == last {
            counts[i] = remaining;
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, q)
            .map_err(|e| Error::param("probs", e.to_string()))?
            .sample(rng);
        counts[i] = k;
        remaining -= k;
        mass_left -= p;
    }
    Ok(counts)
}

/// Photon-level Monte Carlo of the detector, independent of [`ResponseMatrix`].
///
/// Per run: draw `n ~ p`, keep each photon with probability `η`, route each survivor to a
/// uniformly random channel, and count the channels that received at least one photon.
pub fn simulate_microscopic(
    p: &PhotonDistribution,
    config: DetectorConfig,
    runs: u64,
    seed: u64,
) -> Result<ClickDistribution> {
    if runs == 0 {
        return Err(Error::param("runs", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf: Vec<f64> = p
        .probs()
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let channels = config.channels;
    let mut stamp = vec![0u64; channels];
    let mut counts = vec![0u64; channels + 1];
    for run in 1..=runs {
        let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
        let photons = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
        let mut clicks = 0;
        for _ in 0..photons {
            if rng.random::<f64>() < config.efficiency {
                let ch = rng.random_range(0..channels);
                if stamp[ch] != run {
                    stamp[ch] = run;
                    clicks += 1;
                }
            }
        }
        counts[clicks] += 1;
    }
    ClickDistribution::counts(counts)
}
