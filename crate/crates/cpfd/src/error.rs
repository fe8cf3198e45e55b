use thiserror::Error;

/// Crate-wide error type. The `class` method gives the short machine-parseable
/// tag the CLI prints on failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("checksum error: {0}")]
    Checksum(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("refusing to overwrite existing output: {0} (use --force)")]
    Exists(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Param(_) => "param",
            Error::State(_) => "state",
            Error::Calibration(_) => "calibration",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Checksum(_) => "checksum",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Config(_) => "config",
            Error::Dependency(_) => "dependency",
            Error::Numeric(_) => "numeric",
            Error::Exists(_) => "exists",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
