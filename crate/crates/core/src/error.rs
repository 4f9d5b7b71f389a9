use thiserror::Error;

/// Errors produced by the sketch library and its front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible sketches: {0}")]
    IncompatibleSketches(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("k = {k}: {source}")]
    Experiment { k: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

pub(crate) use invalid;
