use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("duplicate item {item} in action")]
    DuplicateItem { item: usize },

    #[error("item {item} out of range for n = {n}")]
    ItemOutOfRange { item: usize, n: usize },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("no perfect matching on the positive support (threshold {threshold:e}, residual mass {residual:e})")]
    NoPerfectMatching { threshold: f64, residual: f64 },

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown invariant suite `{0}`")]
    UnknownSuite(String),

    #[error("enumeration too large: {count} actions exceeds the limit of {limit}")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("unsupported oracle dimensions: {0}")]
    OracleDimensions(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
