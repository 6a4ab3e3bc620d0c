use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violated a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The L² norm of the vorticity exceeded the configured guard.
    #[error("numerical blow-up at t = {t}: |omega|_L2 = {norm:e} exceeds guard {guard:e}")]
    BlowUp { t: f64, norm: f64, guard: f64 },

    /// An iterative solver hit its iteration cap.
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::NotConverged { .. })
    }
}
