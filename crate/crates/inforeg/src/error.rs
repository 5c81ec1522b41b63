use thiserror::Error;

/// Crate-wide error type. Variants map onto the failure categories surfaced
/// by the CLI exit codes (config = 2, ingestion = 3, numeric = 4, other = 1).
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/parameter shapes do not conform.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A data file could not be ingested. Always names the file and line.
    #[error("ingestion error in {file}:{line}: {msg}")]
    Ingest {
        file: String,
        line: usize,
        msg: String,
    },

    /// An internal API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training or analysis produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Ingest { .. } => 3,
            Error::Numeric(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
