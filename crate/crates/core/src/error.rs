use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid time-step configuration: {0}")]
    InvalidStepping(String),

    #[error("density {value:e} at cell {cell} is below the clipping threshold")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("linear solver breakdown: relative residual {residual:e} after {iterations} iterations")]
    SolverBreakdown { residual: f64, iterations: usize },

    #[error("Picard iteration did not converge at step {step}: residual {residual:e} after {iterations} iterations")]
    PicardDivergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("config line {line}: key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NegativeDensity { .. }
                | Error::SolverBreakdown { .. }
                | Error::PicardDivergence { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
