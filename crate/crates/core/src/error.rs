use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("wavelength {wavelength} nm outside table range [{min}, {max}] nm")]
    OutOfRange { wavelength: f64, min: f64, max: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("checksum mismatch in {path}: stored {stored:08x}, computed {computed:08x}")]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("missing entry: {0}")]
    MissingEntry(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user configuration rather than bad data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
