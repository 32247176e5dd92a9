use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the physical or parameter domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate irradiance match: {0}")]
    DegenerateMatch(String),

    #[error("optimizer failed in stage {stage}: {message}")]
    Optimizer { stage: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient data along {axis}: {message}")]
    InsufficientData { axis: String, message: String },

    #[error("cannot compose transforms: {0}")]
    Composition(String),

    #[error("image format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category, used by the CLI error stream.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Dimension(_) => "dimension",
            Error::DegenerateMatch(_) => "degenerate-match",
            Error::Optimizer { .. } => "optimizer",
            Error::Parse { .. } => "parse",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::Composition(_) => "composition",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
