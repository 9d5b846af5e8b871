use thiserror::Error;

use crate::neural::Model;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("polytope has no vertices (empty or unbounded feasible set)")]
    NoVertices,

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("projection did not converge after {sweeps} sweeps (residual {residual:e})")]
    ProjectionFailed {
        best: Vec<f64>,
        sweeps: usize,
        residual: f64,
    },

    #[error("sampling box does not cover the polytope: {0}")]
    Coverage(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged {
        epoch: usize,
        last_finite: Box<Model>,
    },

    #[error("normal matrix is singular; ridge penalty must be positive for this design")]
    RankDeficient,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ProjectionFailed { .. }
            | Error::TrainingDiverged { .. }
            | Error::RankDeficient
            | Error::NonFinite(_)
            | Error::NoVertices
            | Error::NoSolution(_) => 3,
            Error::Inconclusive(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
