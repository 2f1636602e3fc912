use crate::gp::MinimizeReport;

/// Errors raised by the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("field is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("minimizer did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        iters: usize,
        residual: f64,
        report: Box<MinimizeReport>,
    },

    #[error("step size underflow after {iters} iterations")]
    StepUnderflow {
        iters: usize,
        report: Box<MinimizeReport>,
    },

    #[error("no sign change of the trial energy difference on [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The last minimizer report carried by convergence failures, if any.
    pub fn report(&self) -> Option<&MinimizeReport> {
        match self {
            Error::NonConvergence { report, .. } | Error::StepUnderflow { report, .. } => {
                Some(report)
            }
            _ => None,
        }
    }

    pub fn into_report(self) -> Option<MinimizeReport> {
        match self {
            Error::NonConvergence { report, .. } | Error::StepUnderflow { report, .. } => {
                Some(*report)
            }
            _ => None,
        }
    }
}
