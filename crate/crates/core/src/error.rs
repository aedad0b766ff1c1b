//! Crate-wide error type.
//!
//! Validation failures (bad parameters, violated invariants, mismatched
//! shapes) and I/O failures are kept apart because the CLI maps them to
//! different exit codes.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CueError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected {expected} image, found {found}")]
    WrongColorSpace { expected: String, found: String },
    #[error("cue set keeps neither V nor HS; no color carrier to project onto")]
    EmptyColorCarrier,
    #[error("image has no labeled (non-ignore) pixels")]
    NoLabeledPixels,
    #[error("augmentation produced a patch without opaque pixels")]
    DegeneratePatch,
    #[error("no patches available for class {0}")]
    NoPatchesForClass(u8),
    #[error("requested {requested} seeds but the grid only has {available} pixels")]
    TooManySeeds { requested: usize, available: usize },
    #[error("no contour-filled textures for class {0}")]
    MissingClassTextures(u8),
    #[error("bad blur kernel: {0}")]
    BadKernel(String),
    #[error("tensor field is {tensor_w}x{tensor_h} but image is {image_w}x{image_h}")]
    ResolutionMismatch {
        tensor_w: usize,
        tensor_h: usize,
        image_w: usize,
        image_h: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every class IoU is undefined; nothing to average")]
    AllUndefined,
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("coverage histogram needs at least one bin threshold")]
    EmptyBins,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "time step {tau} exceeds the stability limit {limit} (pass the override flag to force)"
    )]
    UnstableTimeStep { tau: f64, limit: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("png error on {path}: {source}")]
    Png {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CueError {
    /// True for failures caused by the environment (missing/corrupt files)
    /// rather than by invalid inputs or parameters.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            CueError::MissingFile(_) | CueError::Io { .. } | CueError::Png { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CueError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CueError>;
