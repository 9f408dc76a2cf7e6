use std::path::PathBuf;

/// Errors produced by the translation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("pairing error: tiles without a counterpart: {0:?}")]
    Pairing(Vec<String>),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing pretrained weights at {0}")]
    MissingPretrained(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("external command failed: {0}")]
    External(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Npy(#[from] NpyError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Wrapper over the npy reader/writer error types.
#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("npy read: {0}")]
    Read(#[from] ndarray_npy::ReadNpyError),
    #[error("npy write: {0}")]
    Write(#[from] ndarray_npy::WriteNpyError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ndarray_npy::ReadNpyError> for Error {
    fn from(e: ndarray_npy::ReadNpyError) -> Self {
        Error::Npy(NpyError::Read(e))
    }
}

impl From<ndarray_npy::WriteNpyError> for Error {
    fn from(e: ndarray_npy::WriteNpyError) -> Self {
        Error::Npy(NpyError::Write(e))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
