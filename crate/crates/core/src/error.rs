use crate::grid::Field;

/// Errors raised by the solver and analysis layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A thermodynamic function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent arguments (non-nested grids, out-of-range indices, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A field contains a cell with non-positive density or pressure.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A single time step produced an inadmissible state.
    #[error("step rejected: {0}")]
    StepRejected(String),

    /// The time loop gave up after exhausting its dt-halving retries.
    #[error("run failed at t = {t}: {reason}")]
    RunFailed {
        t: f64,
        reason: String,
        last_state: Box<Field>,
    },

    /// A field dump could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
