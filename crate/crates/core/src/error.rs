use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` is the dotted config path.
    #[error("validation failed at `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("bisection failed: {0}")]
    Bisection(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("instability at step {step} (t = {t}): {reason}")]
    Instability { step: usize, t: f64, reason: String },

    #[error(
        "sum-of-exponentials fit error {achieved:.3e} exceeds bound {bound:.3e} with {modes} modes"
    )]
    FitError {
        achieved: f64,
        bound: f64,
        modes: usize,
    },

    /// An inverse was requested beyond the range that can be computed.
    #[error("saturated: {value} exceeds computable limit {limit}")]
    Saturation { value: f64, limit: f64 },

    #[error("missing history: {0}")]
    MissingHistory(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
