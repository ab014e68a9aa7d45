use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing dataset file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {file} at line {line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },

    #[error("node id {id} out of range (num_nodes = {num_nodes}) in {context}")]
    NodeOutOfRange {
        id: usize,
        num_nodes: usize,
        context: &'static str,
    },

    #[error("self-loop in raw edge list: {0}\t{0}")]
    SelfLoop(usize),

    #[error("feature byte-length mismatch: expected {expected} bytes, found {found}")]
    FeatureLength { expected: usize, found: usize },

    #[error("label {label} of node {node} out of [0, {num_classes})")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("node {0} has no label")]
    MissingLabel(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("size guard exceeded: {what} = {value} > {limit}")]
    SizeGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("quota unreachable for class {class}: {reached} of {quota} nodes after {draws} draws")]
    QuotaUnreachable {
        class: usize,
        quota: usize,
        reached: usize,
        draws: usize,
    },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("empty training split")]
    EmptySplit,

    #[error("json error: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
