use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The weight matrix has an empty row or column, so no diagonal scaling can
    /// make it doubly stochastic.
    #[error("unbalanceable: {0}")]
    Unbalanceable(String),

    #[error(
        "not converged after {iterations} iterations (residual {residual:e}); the weight matrix may lack total support"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("scaling underflow at iteration {iteration}: entry {value:e} below 1e-300")]
    ScalingUnderflow { iteration: usize, value: f64 },

    #[error("non-convergent diffusion: residual {residual:e} did not decrease over {window} shifts (periodic or reducible operator)")]
    NonConvergentDiffusion { window: usize, residual: f64 },

    #[error("decomposition failed: no perfect matching on the positive support with residual mass {residual_mass:e} remaining")]
    DecompositionFailed { residual_mass: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 invalid input, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Unbalanceable(_) | Error::Parse { .. } => 2,
            Error::NotConverged { .. }
            | Error::ScalingUnderflow { .. }
            | Error::NonConvergentDiffusion { .. }
            | Error::DecompositionFailed { .. } => 3,
            Error::Io { .. } | Error::Json(_) => 4,
        }
    }
}
