//! Error type shared by the library.

use std::path::PathBuf;

/// Errors reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid spacing {spacing:.4e} does not resolve a Gaussian of decay {decay} (need spacing <= {limit:.4e})")]
    UnderResolved { spacing: f64, decay: f64, limit: f64 },

    #[error("wavevector system at k = ({kx:.4}, {ky:.4}) has condition number {condition:.3e}")]
    IllConditioned { kx: f64, ky: f64, condition: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("field component {0} is identically zero and cannot normalise a misfit")]
    Unnormalizable(&'static str),

    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),

    #[error("training diverged at epoch {epoch}: total loss {loss:e}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("zero reference value for {0}")]
    ZeroTruth(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;
