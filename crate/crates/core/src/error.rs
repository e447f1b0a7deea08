use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: {detail}")]
    ShapeMismatch { layer: usize, detail: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("growth rejected: {0}")]
    Growth(String),

    #[error("fractions must be non-negative and sum to 1 (sum = {sum})")]
    Fractions { sum: f64 },

    #[error("non-finite gradient in {param}")]
    NonFiniteGradient { param: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("malformed csv at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("malformed container: {0}")]
    Container(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(layer: usize, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            layer,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
