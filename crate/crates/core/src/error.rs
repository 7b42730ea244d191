use std::path::PathBuf;

use thiserror::Error;

use crate::moments::SliceId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Ratio of smallest to largest singular value of the warm-up covariance.
    #[error("covariance is numerically singular (singular value ratio {ratio:.3e})")]
    SingularMatrix { ratio: f64 },

    #[error("slice {slice} is empty")]
    EmptySlice { slice: SliceId },

    #[error("Riccati update broke down: n + rho = {value:.3e}")]
    NumericalBreakdown { value: f64 },

    #[error("no kernel support at x = {x}{}", nearest_hint(*.nearest))]
    NoSupport { x: f64, nearest: Option<f64> },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("config key `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("{path}: row {row}: {message}")]
    Ingest {
        path: String,
        row: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn nearest_hint(nearest: Option<f64>) -> String {
    match nearest {
        Some(u) => format!(" (nearest logged projection {u})"),
        None => " (projection log is empty)".to_string(),
    }
}

impl Error {
    /// Short machine-friendly class name, printed by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SingularMatrix { .. } => "singular-matrix",
            Error::EmptySlice { .. } => "empty-slice",
            Error::NumericalBreakdown { .. } => "numerical-breakdown",
            Error::NoSupport { .. } => "no-support",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::Config { .. } => "config",
            Error::Ingest { .. } => "ingestion",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
