use thiserror::Error;

/// Errors produced by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch ({context}): expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyData(_) => "empty_data",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::NonFinite(_) => "non_finite",
            Error::Quadrature { .. } => "quadrature",
            Error::Csv { .. } => "csv",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
