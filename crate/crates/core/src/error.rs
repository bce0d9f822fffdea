use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped so front ends can tell input problems
/// (bad files, bad configuration, malformed rows) from failures that happen
/// while fitting or scoring.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("value {value} at {location} lies outside bounds [{lower}, {upper}]")]
    OutOfBounds {
        value: f64,
        lower: f64,
        upper: f64,
        location: String,
    },

    #[error("argument out of range: {0}")]
    Domain(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the inputs rather than by computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Fit(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
