use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the shape-currents pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate segment between points {index} and {next}")]
    DegenerateSegment { index: usize, next: usize },

    #[error("degenerate (zero-area) face {face}")]
    DegenerateFace { face: usize },

    #[error("face {face} references vertex {index}, but the mesh has {vertices} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertices: usize,
    },

    #[error("mesh is not closed and consistently oriented: {0}")]
    NotClosed(String),

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("rotation is not orthogonal (max deviation {deviation:e})")]
    NonOrthogonalRotation { deviation: f64 },

    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel bandwidth must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate point cloud: all atom centers coincide")]
    DegeneratePointCloud,

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("invalid cluster count k={k} for {m} shapes")]
    InvalidK { k: usize, m: usize },

    #[error("empty Gram matrix")]
    EmptyGram,

    #[error("Gram matrix invalid: {0}")]
    InvalidGram(String),

    #[error("silhouette needs at least two clusters")]
    SingleCluster,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("bad family parameters: {0}")]
    BadFamilyParams(String),

    #[error("no input shapes")]
    EmptyInput,

    #[error("band {band} has {members} members, fewer than k={k}")]
    EmptyBand {
        band: String,
        members: usize,
        k: usize,
    },

    #[error("shape {shape} has no metadata key {key:?}")]
    MissingMetadataKey { shape: String, key: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
