use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate quaternion: norm {0:e} is too small to normalize")]
    DegenerateQuaternion(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric fault: non-finite value produced by `{op}`")]
    NumericFault { op: &'static str },

    #[error("numeric fault at training step {step}: {source}")]
    TrainingFault {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("frame at {0} s is corrupted; use the IMU-only path")]
    CorruptedFrame(f64),

    #[error("degenerate view: camera altitude {0} m is not above the ground plane")]
    DegenerateView(f64),

    #[error("singular {0} matrix")]
    Singular(&'static str),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("timestamp misalignment: {0}")]
    Misaligned(String),

    #[error("parse error in {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
