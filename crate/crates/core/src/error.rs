use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no edges found")]
    EmptyEdgeList(PathBuf),

    #[error("node table refers to unknown node id {0}")]
    UnknownNode(String),

    #[error("label {label} of node {node} is outside the {num_classes} known classes")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("unknown class '{0}'")]
    UnknownClass(String),

    #[error("class '{class}' has {available} nodes, need {required}")]
    ClassTooSmall {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has no labels")]
    Unlabeled,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("feature spaces not aligned: source has {source_dim} dims, target has {target_dim}")]
    FeatureSpacesNotAligned { source_dim: usize, target_dim: usize },

    #[error("label spaces differ: source has {source_classes:?}, target has {target_classes:?}")]
    LabelSpaceMismatch {
        source_classes: Vec<String>,
        target_classes: Vec<String>,
    },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("LLM credentials rejected (HTTP {status})")]
    Credentials { status: u16 },

    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("remote request failed: {0}")]
    Remote(String),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("could not parse class list from prompt")]
    ClassListMissing,

    #[error("{failed} node(s) have no generated text; first failure at node {first_node}: {first_error}")]
    SynthesisIncomplete {
        failed: usize,
        first_node: usize,
        first_error: String,
    },

    #[error("bad matrix file {path}: {message}")]
    MatrixFormat { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
