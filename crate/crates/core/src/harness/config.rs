//! Experiment configuration, stored as TOML.
//!
//! ```toml
//! schema_version = 1
//! kind = "scaling_study"
//! seed = 2024
//! trials = 10
//! output_dir = "results/scaling"
//! sources = ["coherent:10", { kind = "thermal", mean = 5.0 }]
//!
//! [detector]
//! channels = 10
//! efficiency = 0.5
//!
//! [retrieval]
//! lambda = 1e-3
//! epsilon = 1e-12
//! cutoff = 50
//!
//! [grids]
//! runs = [1000, 10000, 100000]
//! ```
//!
//! Sources are given either in the compact `family:params` form or as tables tagged
//! with `kind`. Omitted sections take the defaults of [`ExperimentConfig::preset`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::fock::SourceSpec;
use crate::retrieval::RetrievalSettings;

pub const SCHEMA_VERSION: u32 = 1;

/// Run count used when a study does not specify one.
pub const DEFAULT_RUNS: u64 = 300_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ScalingStudy,
    MethodComparison,
    LambdaSweep,
    ConvergenceStudy,
    OverfittingStudy,
    TableReport,
    SingleRetrieval,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ScalingStudy,
        ExperimentKind::MethodComparison,
        ExperimentKind::LambdaSweep,
        ExperimentKind::ConvergenceStudy,
        ExperimentKind::OverfittingStudy,
        ExperimentKind::TableReport,
        ExperimentKind::SingleRetrieval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ScalingStudy => "scaling_study",
            ExperimentKind::MethodComparison => "method_comparison",
            ExperimentKind::LambdaSweep => "lambda_sweep",
            ExperimentKind::ConvergenceStudy => "convergence_study",
            ExperimentKind::OverfittingStudy => "overfitting_study",
            ExperimentKind::TableReport => "table_report",
            ExperimentKind::SingleRetrieval => "single_retrieval",
        }
    }

    /// Leading key of every trial seed, so different studies never share a stream.
    pub(crate) fn seed_tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_").to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(Error::UnknownVariant {
                what: "experiment kind",
                value: s,
            })
    }
}

/// Sweep axes. Which ones are used depends on the experiment kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Measurement runs per data set; `0` stands for exact click probabilities.
    pub runs: Vec<u64>,
    /// Entropy weights; `0` reproduces plain EM.
    pub lambdas: Vec<f64>,
    /// Stop distances.
    pub epsilons: Vec<f64>,
    /// Stop distance for EM when it is run alongside EME. Defaults to `retrieval.epsilon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em_epsilon: Option<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            runs: vec![DEFAULT_RUNS],
            lambdas: Vec::new(),
            epsilons: Vec::new(),
            em_epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, deserialize_with = "deserialize_sources")]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub grids: Grids,
}

fn default_trials() -> usize {
    10
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourceEntry {
    Short(String),
    Full(SourceSpec),
}

fn deserialize_sources<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SourceSpec>, D::Error> {
    let entries = Vec::<SourceEntry>::deserialize(d)?;
    entries
        .into_iter()
        .map(|e| match e {
            SourceEntry::Short(s) => s.parse().map_err(serde::de::Error::custom),
            SourceEntry::Full(spec) => Ok(spec),
        })
        .collect()
}

const SINGLE_EMITTER_EFFICIENCY: f64 = 0.55;

fn cluster(photons: u32) -> SourceSpec {
    SourceSpec::PhotonCluster {
        photons,
        efficiency: SINGLE_EMITTER_EFFICIENCY,
    }
}

/// Default 25-state roster: coherent, thermal, multimode thermal, and photon-subtracted
/// thermal light with means up to 20, plus clusters of 1 to 9 emitters. It spans `g²`
/// from 0 to 2.
pub fn default_roster() -> Vec<SourceSpec> {
    let mut roster = Vec::with_capacity(25);
    for mean in [1.0, 3.0, 5.0, 10.0, 20.0] {
        roster.push(SourceSpec::Coherent { mean });
    }
    for mean in [0.5, 1.0, 2.0, 5.0] {
        roster.push(SourceSpec::Thermal { mean });
    }
    for (mean, modes) in [(2.0, 2), (5.0, 2), (5.0, 5), (10.0, 10)] {
        roster.push(SourceSpec::MultimodeThermal { mean, modes });
    }
    for (mean, subtractions) in [(3.0, 1), (5.77, 2), (8.0, 3)] {
        roster.push(SourceSpec::SubtractedThermal { mean, subtractions });
    }
    roster.extend((1..=9).map(cluster));
    roster
}

/// The five states characterized in the measured-data tables.
pub fn table_states() -> Vec<SourceSpec> {
    vec![
        SourceSpec::Coherent { mean: 4.95 },
        SourceSpec::Thermal { mean: 4.93 },
        SourceSpec::SubtractedThermal {
            mean: 5.77,
            subtractions: 2,
        },
        cluster(1),
        cluster(9),
    ]
}

impl ExperimentConfig {
    /// Complete default configuration for `kind`.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            schema_version: SCHEMA_VERSION,
            kind,
            seed: 2024,
            trials: 10,
            output_dir: None,
            sources: Vec::new(),
            detector: DetectorConfig::default(),
            retrieval: RetrievalSettings::default(),
            grids: Grids::default(),
        };
        match kind {
            ExperimentKind::ScalingStudy => {
                cfg.sources = vec![
                    SourceSpec::Coherent { mean: 10.0 },
                    SourceSpec::Thermal { mean: 5.0 },
                    cluster(1),
                    cluster(9),
                ];
                cfg.grids.runs = vec![1_000, 10_000, 100_000, 1_000_000, 10_000_000];
            }
            ExperimentKind::MethodComparison => {
                cfg.sources = default_roster();
            }
            ExperimentKind::LambdaSweep => {
                cfg.sources = vec![
                    SourceSpec::Coherent { mean: 5.0 },
                    SourceSpec::Thermal { mean: 2.0 },
                    cluster(1),
                    SourceSpec::MultimodeThermal {
                        mean: 4.0,
                        modes: 2,
                    },
                ];
                cfg.grids.lambdas = vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
            }
            ExperimentKind::ConvergenceStudy => {
                cfg.trials = 5;
                cfg.sources = vec![
                    SourceSpec::Coherent { mean: 4.95 },
                    SourceSpec::Thermal { mean: 4.93 },
                    SourceSpec::SubtractedThermal {
                        mean: 5.77,
                        subtractions: 2,
                    },
                    cluster(1),
                ];
            }
            ExperimentKind::OverfittingStudy => {
                cfg.sources = vec![SourceSpec::Coherent { mean: 4.95 }];
                cfg.grids.runs = vec![100_000];
                cfg.grids.epsilons = vec![1e-12, 1e-9, 1e-6];
            }
            ExperimentKind::TableReport => {
                cfg.sources = table_states();
            }
            ExperimentKind::SingleRetrieval => {
                cfg.trials = 1;
                cfg.sources = vec![SourceSpec::Coherent { mean: 5.0 }];
            }
        }
        cfg
    }

    /// Parses and validates a TOML configuration. Missing `sources` and grids are
    /// filled in from the preset of the declared kind.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut cfg: Self = value
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let preset = Self::preset(cfg.kind);
        if !value.contains_key("sources") {
            cfg.sources = preset.sources;
        }
        let grids = value.get("grids").and_then(|g| g.as_table());
        let has = |key: &str| grids.is_some_and(|g| g.contains_key(key));
        if !has("runs") {
            cfg.grids.runs = preset.grids.runs;
        }
        if !has("lambdas") {
            cfg.grids.lambdas = preset.grids.lambdas;
        }
        if !has("epsilons") {
            cfg.grids.epsilons = preset.grids.epsilons;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!(
                    "unsupported {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be >= 1"));
        }
        if self.sources.is_empty() {
            return Err(Error::param("sources", "must not be empty"));
        }
        for s in &self.sources {
            s.validate()?;
        }
        DetectorConfig::new(self.detector.channels(), self.detector.efficiency())?;
        self.retrieval.validate()?;
        let g = &self.grids;
        ascending(
            "grids.runs",
            &g.runs.iter().map(|&r| r as f64).collect::<Vec<_>>(),
            true,
        )?;
        ascending("grids.lambdas", &g.lambdas, true)?;
        ascending("grids.epsilons", &g.epsilons, false)?;
        if let Some(e) = g.em_epsilon {
            if !(e > 0.0) {
                return Err(Error::param("grids.em_epsilon", "must be > 0"));
            }
        }
        if g.runs.is_empty() {
            return Err(Error::param("grids.runs", "must not be empty"));
        }
        match self.kind {
            ExperimentKind::LambdaSweep if g.lambdas.is_empty() => Err(Error::param(
                "grids.lambdas",
                "a lambda sweep needs a lambda grid",
            )),
            ExperimentKind::OverfittingStudy if g.epsilons.is_empty() => Err(Error::param(
                "grids.epsilons",
                "an overfitting study needs an epsilon grid",
            )),
            ExperimentKind::TableReport | ExperimentKind::MethodComparison
                if g.runs.contains(&0) =>
            {
                Err(Error::param(
                    "grids.runs",
                    "this study needs sampled data (runs > 0)",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Stop distance used for the EM arm of comparative studies.
    pub fn em_epsilon(&self) -> f64 {
        self.grids.em_epsilon.unwrap_or(self.retrieval.epsilon)
    }
}

/// Strictly ascending, finite, and positive (zero allowed when `allow_zero`).
fn ascending(name: &'static str, xs: &[f64], allow_zero: bool) -> Result<()> {
    for &x in xs {
        let ok = x.is_finite() && (x > 0.0 || (allow_zero && x == 0.0));
        if !ok {
            return Err(Error::param(name, format!("entry {x} out of range")));
        }
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(name, "must be strictly ascending"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_has_25_states_spanning_bunching_range() {
        let roster = default_roster();
        assert_eq!(roster.len(), 25);
        let g2: Vec<f64> = roster.iter().map(|s| s.g2().unwrap()).collect();
        assert_eq!(g2.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(g2.iter().cloned().fold(0.0, f64::max), 2.0);
        assert!(roster.iter().all(|s| s.mean() <= 20.0));
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::preset(kind);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(
                ExperimentConfig::from_toml_str(&text).unwrap(),
                cfg,
                "{kind}"
            );
        }
    }

    #[test]
    fn compact_sources_and_preset_fill_in() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            schema_version = 1
            kind = "lambda_sweep"
            seed = 5
            sources = ["thermal:2", { kind = "coherent", mean = 5.0 }]
            [grids]
            runs = [1000]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sources[0], SourceSpec::Thermal { mean: 2.0 });
        assert_eq!(cfg.sources[1], SourceSpec::Coherent { mean: 5.0 });
        assert_eq!(cfg.grids.runs, vec![1000]);
        assert_eq!(cfg.grids.lambdas.len(), 6);
        assert_eq!(cfg.trials, 10);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = "schema_version = 1\nkind = \"scaling_study\"\nseed = 1\n";
        assert!(ExperimentConfig::from_toml_str(base).is_ok());
        let cases = [
            "schema_version = 2\nkind = \"scaling_study\"\nseed = 1\n".to_string(),
            format!("{base}sources = []\n"),
            format!("{base}[grids]\nruns = [100, 10]\n"),
            format!("{base}[grids]\nepsilons = [-1.0]\n"),
            format!("{base}[detector]\nchannels = 0\nefficiency = 0.5\n"),
            format!("{base}bogus = 3\n"),
            "schema_version = 1\nkind = \"nope\"\nseed = 1\n".to_string(),
        ];
        for text in cases {
            assert!(ExperimentConfig::from_toml_str(&text).is_err(), "{text}");
        }
    }
}
