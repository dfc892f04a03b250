use std::path::PathBuf;

/// Errors raised by the tensor, interpolation and potential routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mode {0}; expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CP tensor has rank zero")]
    EmptyCp,

    #[error("quadrature tolerance {target:e} not reached with M = {m} (max relative error {achieved:e})")]
    QuadratureTolerance { m: usize, target: f64, achieved: f64 },

    #[error("infeasible error target {target:e}: interpolation floor alone is {floor:e}")]
    InfeasibleTarget { target: f64, floor: f64 },

    #[error("particle packing failed after {attempts} attempts ({placed} of {requested} placed)")]
    PackingFailed { requested: usize, placed: usize, attempts: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
