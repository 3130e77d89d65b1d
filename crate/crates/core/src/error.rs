use std::path::PathBuf;

use crate::measure::Capability;

/// Errors raised by kernels, measures, flows and the run harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target `{target}` lacks the {capability} capability")]
    MissingCapability {
        capability: Capability,
        target: &'static str,
    },

    #[error(
        "absolute continuity violated: target mass {pi_mass} on atom {atom} where mu has no mass"
    )]
    AbsoluteContinuity { atom: usize, pi_mass: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("problem too large for exhaustive search: {0}")]
    Scale(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
