use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("PGM parse error: {0}")]
    Pgm(String),

    #[error("invalid frame: {0}")]
    Frame(String),

    #[error("invalid clip: {0}")]
    Clip(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("embedding bank: {0}")]
    Bank(String),

    #[error("missing embedding entry `{0}`")]
    MissingEntry(String),

    #[error("cannot normalize a zero-length vector")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown collision class `{0}`")]
    UnknownClass(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
