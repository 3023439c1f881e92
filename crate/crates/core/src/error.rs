use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("scene is empty: {0}")]
    EmptyScene(&'static str),
    #[error("particle {index} at {position:?} is outside the usable grid region")]
    OutOfGrid { index: usize, position: [f64; 3] },
    #[error("degenerate deformation gradient (det = {det:e})")]
    DegenerateF { det: f64 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("point cloud {0} contains no points")]
    EmptyCloud(PathBuf),
    #[error("elastomer has no structured surface lattice")]
    NoSurface,
    #[error("crop window {window:?} does not fit inside source of {width}x{height}")]
    CropOutOfBounds {
        window: [f64; 4],
        width: usize,
        height: usize,
    },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("session not initialized")]
    SessionNotInitialized,
    #[error("non-monotonic sim_time: {got} after {previous}")]
    NonMonotonicTime { previous: f64, got: f64 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable numeric code, shared with the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::GridTooSmall(_) => 2,
            Error::EmptyScene(_) => 3,
            Error::OutOfGrid { .. } => 4,
            Error::DegenerateF { .. } => 5,
            Error::Parse { .. } => 6,
            Error::EmptyCloud(_) => 7,
            Error::NoSurface => 8,
            Error::CropOutOfBounds { .. } => 9,
            Error::ShapeMismatch(..) => 10,
            Error::SessionNotInitialized => 11,
            Error::NonMonotonicTime { .. } => 12,
            Error::Protocol(_) => 13,
            Error::ManifestMismatch(_) => 14,
            Error::Config(_) => 15,
            Error::Io(_) | Error::Image(_) | Error::Csv(_) | Error::Json(_) => 16,
        }
    }

    /// True for failures raised by the physics kernel.
    pub fn is_physics_fault(&self) -> bool {
        matches!(
            self,
            Error::OutOfGrid { .. } | Error::DegenerateF { .. } | Error::GridTooSmall(_)
        )
    }
}
