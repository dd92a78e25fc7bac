use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("zero-extent geometry: all vertices coincide")]
    ZeroExtent,

    #[error("normal {index} is not unit length (norm {norm})")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },

    #[error("empty row dimension in {0}")]
    EmptyDimension(&'static str),

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("variable does not belong to this tape")]
    ForeignVariable,

    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss([usize; 2]),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("occupancy set is invalid: {0}")]
    InvalidOccupancy(String),

    #[error("training aborted: non-finite loss in stage {stage} at iteration {iteration}")]
    NanLoss { stage: u8, iteration: usize },

    #[error("model is not in the binary phase")]
    NotBinary,

    #[error("removal target already inactive: {0}")]
    InactiveTarget(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty reconstruction")]
    EmptyReconstruction,

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("openscad syntax error at byte {offset}: {message}")]
    Scad { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
