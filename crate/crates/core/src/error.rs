use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QsdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QsdError {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not hermitian: {0}")]
    NotHermitian(String),

    #[error("basis index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid time step {0}: must be positive and finite")]
    InvalidStep(f64),

    #[error("numerical blowup at t = {t}: amplitudes diverged (reduce dt)")]
    NumericalBlowup { t: f64 },

    #[error("truncation leak {leak:.3e} at t = {t} exceeds {limit:.1e}; use a larger dim")]
    TruncationLeak { t: f64, leak: f64, limit: f64 },

    #[error("master-equation step too large at t = {t}: {detail}")]
    StepTooLarge { t: f64, detail: String },

    #[error("trajectory {index} (seed {seed}) failed: {source}")]
    Trajectory {
        index: usize,
        seed: u64,
        #[source]
        source: Box<QsdError>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("record spacing does not resolve the drive period: {0}")]
    SpacingMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QsdError {
    /// Stable, machine-readable category used by the CLI for error reporting.
    pub fn category(&self) -> &'static str {
        match self {
            QsdError::InvalidDimension { .. } => "invalid-dimension",
            QsdError::DimensionMismatch { .. } => "dimension-mismatch",
            QsdError::NotHermitian(_) => "not-hermitian",
            QsdError::IndexOutOfRange { .. } => "index-out-of-range",
            QsdError::Parse { .. } => "parse",
            QsdError::InvalidStep(_) => "invalid-step",
            QsdError::NumericalBlowup { .. } => "numerical-blowup",
            QsdError::TruncationLeak { .. } => "truncation-leak",
            QsdError::StepTooLarge { .. } => "step-too-large",
            QsdError::Trajectory { source, .. } => source.category(),
            QsdError::InvalidParameter(_) => "invalid-parameter",
            QsdError::UnknownScenario(_) => "unknown-scenario",
            QsdError::SpacingMismatch(_) => "spacing-mismatch",
            QsdError::Config(_) => "config",
            QsdError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QsdError::Io {
            path: path.into(),
            source,
        }
    }
}
