use std::path::PathBuf;

/// Errors produced by the feature extraction, odometry and evaluation stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point has zero range")]
    DegeneratePoint,
    #[error("rotation angle too close to pi for a unique logarithm")]
    RotationNearPi,
    #[error("image has no valid pixels")]
    EmptyImage,
    #[error("image is {rows}x{cols}, convolution needs at least 3x3")]
    ImageTooSmall { rows: usize, cols: usize },
    #[error("frequency filtering requires an even image width, got {0}")]
    OddWidth(usize),
    #[error("only {found} usable correspondences, need at least {required}")]
    InsufficientConstraints { found: usize, required: usize },
    #[error("{path}: size {len} bytes is not a multiple of 16")]
    MalformedFrame { path: PathBuf, len: u64 },
    #[error("{path}:{line}: {reason}")]
    MalformedPoseLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("trajectory covers {length:.1} m, shortest evaluated segment is {required:.1} m")]
    TrajectoryTooShort { length: f64, required: f64 },
    #[error("trajectory lengths differ: {estimate} estimated vs {truth} ground-truth poses")]
    LengthMismatch { estimate: usize, truth: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
