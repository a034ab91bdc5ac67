use thiserror::Error;

/// Errors raised by the laboratory. Every variant names the module that
/// produced it so CLI diagnostics stay traceable.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[{module}] domain error: {msg}")]
    Domain { module: &'static str, msg: String },

    #[error("[{module}] construction error: {msg}")]
    Construction { module: &'static str, msg: String },

    #[error("[{module}] numerical error: {msg}")]
    Numerical { module: &'static str, msg: String },

    #[error("[{module}] precondition failed: {msg}")]
    Precondition { module: &'static str, msg: String },

    #[error("[{module}] validation error: {msg}")]
    Validation { module: &'static str, msg: String },

    #[error("[{module}] accuracy error: {msg}")]
    Accuracy { module: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { module, msg: msg.into() }
    }
    pub(crate) fn construction(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Construction { module, msg: msg.into() }
    }
    pub(crate) fn numerical(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical { module, msg: msg.into() }
    }
    pub(crate) fn precondition(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Precondition { module, msg: msg.into() }
    }
    pub(crate) fn validation(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Validation { module, msg: msg.into() }
    }
    pub(crate) fn accuracy(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Accuracy { module, msg: msg.into() }
    }
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
