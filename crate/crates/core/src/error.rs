use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied values violate an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A region graph, circuit, or parameter set is structurally unsound.
    #[error("structural error: {0}")]
    Structure(String),

    /// A data or model file could not be parsed.
    #[error("format error in {}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into()))]
    Format {
        path: Option<PathBuf>,
        message: String,
    },

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    Version { found: u64, supported: u32 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The objective or a gradient became non-finite during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub(crate) fn format(path: Option<&std::path::Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.map(|p| p.to_path_buf()),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
