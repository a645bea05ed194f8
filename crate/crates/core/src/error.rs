use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point is behind camera (depth {0})")]
    BehindCamera(f64),

    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),

    #[error("no intersection: {0}")]
    NoIntersection(&'static str),

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("undefined R2: targets are constant")]
    UndefinedR2,

    #[error("scene resampling budget exhausted after {attempts} attempts (pose {pose_index})")]
    ResampleBudget { pose_index: u32, attempts: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed for sample {id}: {reason}")]
    Validation { id: String, reason: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("format error in {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by bad inputs.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Image { .. } | Error::Format { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
