//! Crate-wide error type.

use crate::solver::SolverResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation needs input the caller did not supply enough of.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A data file could not be parsed; the message names the position.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// The constraint set stayed infeasible after every slack escalation.
    /// Carries the best iterate found so callers can inspect it.
    #[error("solver infeasible after {escalations} escalation(s): residual {residual:.3e}")]
    Infeasible {
        residual: f64,
        escalations: u32,
        best: Box<SolverResult>,
    },

    /// A slab constraint with a zero row and |b| > s can never be met.
    #[error("structurally infeasible constraint {index}: zero row with |b| = {b_abs:.3e} > slack {slack:.3e}")]
    StructurallyInfeasible { index: usize, b_abs: f64, slack: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.as_ref().display().to_string(), message: message.into() }
    }
}
