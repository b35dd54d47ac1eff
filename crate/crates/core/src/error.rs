use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid interval: lower bound {lower} exceeds upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("invalid storage parameters: {0}")]
    InvalidStorage(String),

    #[error("invalid value curve: {0}")]
    InvalidCurve(String),

    #[error("state of charge {soc} outside [0, {capacity}]")]
    SocOutOfRange { soc: f64, capacity: f64 },

    #[error(
        "value curve not monotone at index {index}: rises by {excess:e} (tolerance {tolerance:e})"
    )]
    NotMonotone {
        index: usize,
        excess: f64,
        tolerance: f64,
    },

    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("oracle instance too large: {size} exceeds guard {limit}")]
    GuardExceeded { size: u64, limit: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("tolerance check failed: {0}")]
    Tolerance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
