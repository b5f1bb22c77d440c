use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or batch does not fit the layer it is fed to.
    #[error("dimension mismatch at layer {layer}: expected {expected}, found {found}")]
    Dimension {
        layer: usize,
        expected: usize,
        found: usize,
    },

    /// Caller-supplied values outside their valid range.
    #[error("invalid input: {0}")]
    Input(String),

    /// Two structures that must agree (trace and network, mask and network,
    /// label and image files) do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A non-finite value appeared during training.
    #[error("non-finite {what} at layer {layer}, step {step}")]
    NonFinite {
        what: &'static str,
        layer: usize,
        step: u64,
    },

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    Magic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { expected: u32, found: String },

    #[error("malformed model manifest: {0}")]
    Manifest(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
