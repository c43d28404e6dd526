use std::path::PathBuf;

/// Errors produced by the rehabilitation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("keypoint layout is missing `{0}`")]
    MissingKeypoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("media error: {0}")]
    Media(String),

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("llm provider error: {0}")]
    Llm(#[from] crate::report::LlmError),

    #[error("io error at {path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn media(msg: impl Into<String>) -> Self {
        Error::Media(msg.into())
    }

    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
