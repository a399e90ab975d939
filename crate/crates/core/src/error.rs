use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("unsupported bit depth in {path}: {detail}")]
    BitDepth { path: PathBuf, detail: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("class index {0} outside 0..5")]
    ClassRange(usize),
    #[error("no superpixel qualifies as a refinement seed")]
    NoSeeds,
    #[error("singular refinement system (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("ground truth mask has no foreground pixels")]
    EmptyGroundTruth,
    #[error("{0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
