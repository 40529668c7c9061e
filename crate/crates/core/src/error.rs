use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("switch status {status} leaves the feeder disconnected")]
    Disconnected { status: String },

    #[error("switch status has {got} bits, grid has {expected} switches")]
    StatusLength { expected: usize, got: usize },

    #[error("admittance matrix is singular beyond its kernel (numerically disconnected)")]
    Factorization,

    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("placement cannot observe transition of breaker S{breaker} in context {context}")]
    Unobservable { breaker: usize, context: String },

    #[error("signature vanishes on the selected buses")]
    ZeroSignature,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trend vector has zero norm")]
    ZeroTrend,

    #[error("library does not match this grid/placement: {0}")]
    LibraryMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
