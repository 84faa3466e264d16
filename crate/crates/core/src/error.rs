use thiserror::Error;

use crate::model::StabilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("model is not stable (margin {:.3e})", .0.margin)]
    Unstable(Box<StabilityReport>),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("intensity explosion: {0}")]
    Explosion(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Unstable(_) => "unstable",
            Error::Aliasing(_) => "aliasing",
            Error::Explosion(_) => "explosion",
            Error::InsufficientData(_) => "insufficient_data",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
