use std::io;
use std::path::PathBuf;

/// Errors raised by file formats, configuration and commands.
#[derive(Debug, thiserror::Error)]
pub enum HinetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}: truncated, expected {expected} bytes but found {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: checksum mismatch, header records {expected:08x} but payload hashes to {actual:08x}")]
    Checksum { path: PathBuf, expected: u32, actual: u32 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: u64, step: usize, loss: f64 },
    #[error(transparent)]
    Core(#[from] hinet_core::Error),
}

impl HinetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HinetError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 3 for numerical aborts, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HinetError::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HinetError>;
