use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use pnrstat::detector::{self, DetectorConfig, ResponseMatrix};
use pnrstat::harness::{self, ExperimentConfig};
use pnrstat::io::{self, ClickFile};
use pnrstat::retrieval::{self, Algorithm, RetrievalSettings};
use pnrstat::{DiagnosticsBundle, Error, Result, SourceSpec};

/// Exit code for command-line usage errors.
const USAGE_EXIT: u8 = 11;

#[derive(Parser)]
#[command(
    name = "pnrstat",
    version,
    about = "Photon statistics from multiplexed click data"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Click statistics of a model source, exact or sampled.
    Simulate {
        /// Source, e.g. coherent:10, thermal:5, multimode:5:2, subtracted:5.77:2, cluster:9:0.55.
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 10)]
        channels: usize,
        #[arg(long, default_value_t = 0.5)]
        efficiency: f64,
        /// Measurement runs; 0 gives exact click probabilities.
        #[arg(long, default_value_t = 0)]
        runs: u64,
        /// Required when runs > 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Photon-number cutoff of the source; defaults to one holding the whole law.
        #[arg(long)]
        cutoff: Option<usize>,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write here instead of stdout; CSV output also gets a sidecar `<stem>.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Photon statistics from a click file.
    Retrieve {
        /// Click data: `.json`, or CSV with an optional sidecar.
        input: PathBuf,
        /// eme, em, or direct_inverse.
        #[arg(long, default_value = "eme")]
        algorithm: String,
        /// Detector efficiency; taken from the file metadata when omitted.
        #[arg(long)]
        efficiency: Option<f64>,
        #[arg(long, default_value_t = retrieval::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = retrieval::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = retrieval::DEFAULT_CUTOFF)]
        cutoff: usize,
        #[arg(long, default_value_t = retrieval::DEFAULT_MAX_ITERATIONS)]
        max_iterations: u64,
        /// json (full report) or csv (estimate only).
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Nonclassicality diagnostics of a photon distribution.
    Diagnose {
        /// Distribution: CSV `n,p` or a JSON array.
        input: PathBuf,
        /// Reference distribution for fidelity and distance.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs an experiment configuration and writes its result directory.
    Experiment {
        config: PathBuf,
        /// Overrides `output_dir` of the configuration.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides the master seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

fn parse_format(s: &str) -> Result<Format> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(Error::UnknownVariant {
            what: "format",
            value: s.to_string(),
        }),
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn simulate(
    source: &str,
    channels: usize,
    efficiency: f64,
    runs: u64,
    seed: Option<u64>,
    cutoff: Option<usize>,
    format: Format,
    output: Option<&Path>,
) -> Result<()> {
    let spec: SourceSpec = source.parse()?;
    let config = DetectorConfig::new(channels, efficiency)?;
    let cutoff = cutoff.unwrap_or_else(|| spec.suggested_cutoff());
    let truth = spec.distribution(cutoff)?;
    let exact = detector::forward(&ResponseMatrix::new(config, cutoff)?, &truth)?;
    let clicks = if runs == 0 {
        exact
    } else {
        let seed = seed.ok_or_else(|| Error::InvalidParameter {
            name: "seed",
            reason: "sampled runs need an explicit --seed".into(),
        })?;
        detector::sample_clicks(&exact, runs, seed)?
    };
    match (format, output) {
        (Format::Csv, Some(path)) => io::write_clicks_csv(path, &clicks, Some(efficiency)),
        (Format::Csv, None) => emit(None, &io::clicks_to_csv(&clicks)?),
        (Format::Json, _) => {
            let file = ClickFile::new(&clicks, Some(efficiency));
            emit(output, &(serde_json::to_string_pretty(&file)? + "\n"))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn retrieve(
    input: &Path,
    algorithm: Algorithm,
    efficiency: Option<f64>,
    settings: RetrievalSettings,
    format: Format,
    output: Option<&Path>,
) -> Result<()> {
    let (clicks, meta) = io::read_clicks(input)?;
    let eta = efficiency
        .or(meta.and_then(|m| m.eta))
        .ok_or_else(|| Error::InvalidParameter {
            name: "efficiency",
            reason: "not in the click metadata; pass --efficiency".into(),
        })?;
    let config = DetectorConfig::new(clicks.channels(), eta)?;
    let matrix = ResponseMatrix::new(config, settings.cutoff)?;
    let text = if algorithm == Algorithm::DirectInverse {
        let x = retrieval::direct_inverse(&clicks, &matrix)?;
        match format {
            Format::Csv => io::signed_to_csv(&x)?,
            Format::Json => {
                let negative = x.iter().any(|&v| v < 0.0);
                let record = json!({ "algorithm": algorithm, "estimate": x, "negative": negative });
                serde_json::to_string_pretty(&record)? + "\n"
            }
        }
    } else {
        let settings = RetrievalSettings {
            algorithm,
            ..settings
        };
        let report = retrieval::retrieve(&clicks, &matrix, &settings)?;
        if !report.converged() {
            log::warn!(
                "stopped at the iteration cap ({}) with step distance {:e}",
                report.iterations,
                report.final_step_distance
            );
        }
        match format {
            Format::Csv => io::distribution_to_csv(&report.estimate)?,
            Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        }
    };
    emit(output, &text)
}

fn diagnose(
    input: &Path,
    reference: Option<&Path>,
    format: Format,
    output: Option<&Path>,
) -> Result<()> {
    let p = io::read_distribution(input)?;
    let reference = reference.map(io::read_distribution).transpose()?;
    let bundle = DiagnosticsBundle::compute(&p, reference.as_ref());
    let text = match format {
        Format::Csv => bundle.to_csv(),
        Format::Json => serde_json::to_string_pretty(&bundle.to_flat_json())? + "\n",
    };
    emit(output, &text)
}

fn experiment(config: &Path, output_dir: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_toml_str(&std::fs::read_to_string(config)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = Some(dir);
    }
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::InvalidParameter {
            name: "output_dir",
            reason: "set it in the configuration or pass --output-dir".into(),
        })?;
    log::info!("running {} with seed {}", cfg.kind, cfg.seed);
    let result = harness::run_experiment(&cfg)?;
    harness::write_result(&result, &dir)?;
    log::info!(
        "wrote {} in {:.1} s",
        dir.display(),
        result.wall_time.as_secs_f64()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            source,
            channels,
            efficiency,
            runs,
            seed,
            cutoff,
            format,
            output,
        } => simulate(
            &source,
            channels,
            efficiency,
            runs,
            seed,
            cutoff,
            parse_format(&format)?,
            output.as_deref(),
        ),
        Command::Retrieve {
            input,
            algorithm,
            efficiency,
            lambda,
            epsilon,
            cutoff,
            max_iterations,
            format,
            output,
        } => {
            let settings = RetrievalSettings {
                lambda,
                epsilon,
                cutoff,
                max_iterations,
                ..RetrievalSettings::default()
            };
            retrieve(
                &input,
                algorithm.parse()?,
                efficiency,
                settings,
                parse_format(&format)?,
                output.as_deref(),
            )
        }
        Command::Diagnose {
            input,
            reference,
            format,
            output,
        } => diagnose(
            &input,
            reference.as_deref(),
            parse_format(&format)?,
            output.as_deref(),
        ),
        Command::Experiment {
            config,
            output_dir,
            seed,
        } => experiment(&config, output_dir, seed),
    }
}

fn error_record(kind: &str, code: u8, message: String) -> String {
    json!({ "error": kind, "exit_code": code, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", USAGE_EXIT, e.to_string()));
            return ExitCode::from(USAGE_EXIT);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code() as u8;
            eprintln!("{}", error_record(e.kind(), code, e.to_string()));
            ExitCode::from(code)
        }
    }
}
