use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("divergent series: {0}")]
    Divergence(String),
    #[error("tolerance unreachable: achieved width {achieved:e}, requested {requested:e}")]
    Tolerance { achieved: f64, requested: f64 },
    #[error("resource cap exceeded: {what} requires {required:e}, cap is {cap:e}")]
    ResourceCap { what: String, required: f64, cap: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
