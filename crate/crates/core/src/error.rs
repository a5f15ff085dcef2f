use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face}: {message}")]
    InvalidMesh { face: usize, message: String },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label out of range: {0}")]
    Label(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("confusion matrix has no evaluated pixels")]
    EmptyMatrix,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("json {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
