use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// Click outcome `m` was observed but the current model assigns it zero probability.
    #[error("click outcome {m} has data {data} but zero model probability")]
    ModelSupport { m: usize, data: f64 },

    #[error("statistic `{0}` is undefined for a distribution with zero mean")]
    UndefinedStatistic(&'static str),

    #[error("response matrix is numerically singular (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },

    #[error("trial with seed {seed} failed: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    /// Failure inside an experiment, tagged with the source, grid point, and seed.
    #[error("{context}: {source}")]
    Experiment {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("unknown value `{value}` for {what}")]
    UnknownVariant { what: &'static str, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Stable process exit code for the CLI; each error class gets its own.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } => 2,
            Error::InvalidDistribution(_) => 3,
            Error::DimensionMismatch { .. } => 4,
            Error::ModelSupport { .. } => 5,
            Error::UndefinedStatistic(_) => 6,
            Error::Singular { .. } => 7,
            Error::Trial { source, .. } | Error::Experiment { source, .. } => source.exit_code(),
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => 8,
            Error::UnknownVariant { .. } => 9,
            Error::Io(_) => 10,
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ModelSupport { .. } => "model_support",
            Error::UndefinedStatistic(_) => "undefined_statistic",
            Error::Singular { .. } => "singular",
            Error::Trial { source, .. } | Error::Experiment { source, .. } => source.kind(),
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => "malformed_input",
            Error::UnknownVariant { .. } => "unknown_variant",
            Error::Io(_) => "io",
        }
    }
}
