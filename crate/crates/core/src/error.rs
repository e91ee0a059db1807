use thiserror::Error;

use crate::lmi::{AnalysisReport, InclusionReport, SolveStatus};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The integrator hit a non-finite or runaway state.
    #[error("trajectory diverged at t = {time}")]
    Diverged { time: f64, last_state: Vec<f64> },

    #[error("conic backend returned {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("unknown conic backend `{0}`")]
    UnknownBackend(String),

    #[error("backend `{backend}` lacks capability: {missing}")]
    Capability {
        backend: String,
        missing: &'static str,
    },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    /// The recovered certificate does not satisfy the analysis conditions it was
    /// derived from.
    #[error("cross-validation of synthesized gain failed")]
    CrossValidation {
        analysis: Box<AnalysisReport>,
        inclusion: Box<InclusionReport>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("plot rendering failed: {0}")]
    Plot(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
