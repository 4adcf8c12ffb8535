use std::io;

use thiserror::Error;

/// Errors raised while building, loading, or running a [`crate::nn::Model`].
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch{}: expected {expected}, found {found}", layer_suffix(*.layer))]
    ShapeMismatch {
        layer: Option<usize>,
        expected: String,
        found: String,
    },
    #[error("weight length mismatch at layer {layer}: expected {expected}, found {found}")]
    WeightLengthMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite weight at layer {layer}")]
    NonFiniteWeight { layer: usize },
    #[error("model has no layers")]
    NoLayers,
    #[error("invalid layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("malformed model header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("truncated weights at layer {layer}")]
    TruncatedWeights { layer: usize },
    #[error("{count} trailing bytes after the last weight block")]
    TrailingBytes { count: usize },
    #[error("unknown fixture architecture `{0}`")]
    UnknownArchitecture(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn layer_suffix(layer: Option<usize>) -> String {
    layer.map(|l| format!(" at layer {l}")).unwrap_or_default()
}

impl NnError {
    /// Stable numeric code for each failure class.
    pub fn code(&self) -> u32 {
        match self {
            NnError::ShapeMismatch { .. } => 101,
            NnError::WeightLengthMismatch { .. } => 102,
            NnError::NonFiniteWeight { .. } => 103,
            NnError::NoLayers => 104,
            NnError::InvalidLayer { .. } => 105,
            NnError::MalformedHeader { .. } => 106,
            NnError::TruncatedWeights { .. } => 107,
            NnError::TrailingBytes { .. } => 108,
            NnError::UnknownArchitecture(_) => 109,
            NnError::Io(_) => 110,
        }
    }
}

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("profiling set is empty")]
    EmptyProfilingSet,
    #[error("section count k must be at least 1")]
    InvalidK,
    #[error("dimension mismatch: expected {expected} neurons x {k_expected} sections, found {found} x {k_found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        k_expected: usize,
        k_found: usize,
    },
    #[error("malformed coverage file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("region {region} lies outside the {height}x{width} image")]
    RegionOutOfBounds {
        region: crate::mutation::Rect,
        height: usize,
        width: usize,
    },
    #[error("image shapes differ: {0} vs {1}")]
    ShapeMismatch(String, String),
    #[error("tensor of shape {0} is not an image")]
    NotAnImage(String),
    #[error("invalid mutation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad IDX magic 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
}

/// Top-level error for campaign orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("batch {batch}: {source}")]
    InBatch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("report output: {0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Search(_)
            | Error::Mutation(MutationError::InvalidParams(_)) => 2,
            Error::Invariant(_) => 4,
            Error::InBatch { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
