use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate state (norm = {norm:e})")]
    DegenerateState { norm: f64 },

    /// The equations of motion could not be solved to acceptable accuracy.
    #[error("trajectory aborted at t = {t}: {reason} (condition estimate {condition:e}, residual {residual:e})")]
    SolverAbort {
        t: f64,
        reason: String,
        condition: f64,
        residual: f64,
    },

    #[error("Fock truncation too small for mode {mode}: need n_max >= {required}, have {actual}")]
    Truncation {
        mode: usize,
        required: usize,
        actual: usize,
    },

    #[error("{aborted} of {total} trajectories aborted (limit {limit:.1}%)")]
    AbortFraction {
        aborted: usize,
        total: usize,
        limit: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
