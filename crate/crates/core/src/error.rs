use thiserror::Error;

/// A violated parameter invariant, named by field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} must be > 0 (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} must be >= 0 (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must be finite")]
    NotFinite { field: &'static str },
    #[error("delta must lie in (0, π/2) (got {value})")]
    MountAngle { value: f64 },
}

impl ParamError {
    pub fn field(&self) -> &'static str {
        match self {
            ParamError::NotPositive { field, .. }
            | ParamError::Negative { field, .. }
            | ParamError::NotFinite { field } => field,
            ParamError::MountAngle { .. } => "delta",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state became non-finite at t = {t} s; check parameters and step size")]
    NonFinite { t: f64 },
    #[error("QP solver did not converge in {iterations} iterations (projected-gradient residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Param(_) | Error::Config(_) | Error::Dimension(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
