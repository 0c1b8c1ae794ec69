use std::path::PathBuf;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("byte count mismatch in {path}: expected {expected} bytes, found {found}")]
    ByteCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("invalid window: lo ({lo}) must be below hi ({hi})")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),

    #[error("slice index {index} out of range (nz = {nz})")]
    SliceOutOfRange { index: usize, nz: usize },

    #[error("invalid RECIST annotation: {0}")]
    InvalidRecist(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("node index {index} out of range for {n_nodes} nodes")]
    NodeOutOfRange { index: usize, n_nodes: usize },

    #[error("invalid capacity {0}")]
    InvalidCapacity(f64),

    #[error("need at least {k} samples for a {k}-component mixture, got {n}")]
    TooFewSamples { n: usize, k: usize },

    #[error("seed mask has no {0} pixels")]
    MissingSeeds(&'static str),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("annotation csv error: {0}")]
    Csv(String),
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
