use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quaternion (norm {norm:e})")]
    DegenerateQuaternion { norm: f64 },

    #[error("quaternion is not unit (norm {norm})")]
    NonUnitQuaternion { norm: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("invalid skeleton: {0}")]
    Skeleton(String),

    #[error("degenerate skeleton: {0}")]
    DegenerateSkeleton(String),

    #[error("invalid motion: {0}")]
    Motion(String),

    #[error("invalid skinning weights: {0}")]
    Weights(String),

    #[error("segmentation error: {0}")]
    Segmentation(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("proximity index error: {0}")]
    EmptyIndex(String),

    #[error("non-finite value in {term}")]
    Numeric { term: String },

    #[error("{format} parse error at line {line}: {message}")]
    Parse {
        format: &'static str,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimization diverged at iteration {iteration}: loss {loss} exceeds 10x initial {initial}")]
    Divergence { iteration: usize, loss: f64, initial: f64 },

    #[error("unknown scene id `{0}`")]
    UnknownScene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(format: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            format,
            line,
            message: message.into(),
        }
    }
}
