//! Seeded experiment runner.
//!
//! An [`ExperimentConfig`] names a study, the sources, the detector, the retrieval
//! settings, and the sweep grids. Running it yields an [`ExperimentResult`]: named
//! [`Table`]s (always `rows`, usually `summary`, plus study-specific extras) and the
//! resolved configuration. [`write_result`] lays these out in a directory:
//!
//! ```text
//! out/
//!   config.toml     resolved configuration
//!   manifest.json   kind, version, master seed, table list
//!   timing.json     wall time (the only file that differs between replays)
//!   rows.csv        one row per trial, with the seed that produced it
//!   rows.json
//!   summary.csv ... other tables, each as CSV and JSON
//! ```
//!
//! Trials run on the rayon pool. Each trial seed is a hash of the master seed and the
//! trial's (study, source, grid point, trial) indices, and rows are emitted in index
//! order, so output does not depend on scheduling.

mod config;
mod studies;
mod table;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::json;

pub use config::{
    default_roster, table_states, ExperimentConfig, ExperimentKind, Grids, DEFAULT_RUNS,
    SCHEMA_VERSION,
};
pub use studies::{
    run_convergence_study, run_lambda_sweep, run_method_comparison, run_overfitting_study,
    run_scaling_study, run_single_retrieval, run_table_report,
};
pub use table::{Cell, Row, Table};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub tables: BTreeMap<String, Table>,
    pub wall_time: Duration,
}

impl ExperimentResult {
    pub(crate) fn new(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            tables: BTreeMap::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Parse(format!("result has no table `{name}`")))
    }

    /// Per-trial rows.
    pub fn rows(&self) -> &Table {
        &self.tables["rows"]
    }

    pub fn summary(&self) -> Result<&Table> {
        self.table("summary")
    }

    /// Run metadata; wall time is kept out so that replays compare byte for byte.
    pub fn manifest(&self) -> serde_json::Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "kind": self.config.kind.name(),
            "code_version": env!("CARGO_PKG_VERSION"),
            "master_seed": self.config.seed,
            "trials": self.config.trials,
            "tables": self.tables.keys().collect::<Vec<_>>(),
        })
    }
}

/// Validates `cfg` and runs the study it names.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut result = match cfg.kind {
        ExperimentKind::ScalingStudy => run_scaling_study(cfg),
        ExperimentKind::MethodComparison => run_method_comparison(cfg),
        ExperimentKind::LambdaSweep => run_lambda_sweep(cfg),
        ExperimentKind::ConvergenceStudy => run_convergence_study(cfg),
        ExperimentKind::OverfittingStudy => run_overfitting_study(cfg),
        ExperimentKind::TableReport => run_table_report(cfg),
        ExperimentKind::SingleRetrieval => run_single_retrieval(cfg),
    }?;
    result.wall_time = start.elapsed();
    Ok(result)
}

/// Writes the result directory described in the module docs, creating `dir` if needed.
pub fn write_result(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), result.config.to_toml_string()?)?;
    write_json(&dir.join("manifest.json"), &result.manifest())?;
    write_json(
        &dir.join("timing.json"),
        &json!({ "wall_time_s": result.wall_time.as_secs_f64() }),
    )?;
    for (name, table) in &result.tables {
        std::fs::write(dir.join(format!("{name}.csv")), table.to_csv()?)?;
        write_json(&dir.join(format!("{name}.json")), &table.to_json())?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
