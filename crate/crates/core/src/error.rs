use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud contains a non-finite coordinate at index {0}")]
    NonFinitePoint(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("pose on line {line} is not a rigid transform (orthonormality error {error:.3e})")]
    NonRigidPose { line: usize, error: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no non-key frames available around key frame {0}")]
    NoNeighborFrames(usize),

    #[error("cloud has {count} points, encoder needs at least {k}")]
    TooFewPoints { count: usize, k: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward called without a cached forward pass")]
    MissingCache,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no positive correspondences")]
    NoPositives,

    #[error("feature map is empty")]
    EmptyFeatureMap,

    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },

    #[error("no registration results")]
    EmptyResults,

    #[error("no training pairs")]
    NoPairs,

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
