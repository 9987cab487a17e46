use std::path::PathBuf;

/// Errors raised anywhere in the retrieval pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} is not valid UTF-8")]
    InvalidUtf8 { path: PathBuf },

    #[error("malformed query directory {dir}: {reason}")]
    MalformedQuery { dir: PathBuf, reason: String },

    #[error("duplicate id {id:?} in {context}")]
    DuplicateId { id: String, context: String },

    #[error("query {query:?}: gold id {id:?} is not among its candidates")]
    GoldMismatch { query: String, id: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("pair {id:?}: invalid label {label:?} (expected \"Y\" or \"N\")")]
    InvalidLabel { id: String, label: String },

    #[error("invalid data table {name}: {reason}")]
    DataTable { name: String, reason: String },

    #[error("cannot build from an empty document collection")]
    EmptyCorpus,

    #[error("document {0:?} is not in the index")]
    MissingDocument(String),

    #[error("vocabulary is empty after applying min_count = {min_count}")]
    DegenerateCorpus { min_count: usize },

    #[error("query {query:?}: score lists cover different documents")]
    FusionMismatch { query: String },

    #[error("cannot select from an empty score list")]
    EmptySelection,

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("training labels must include both classes")]
    DegenerateLabels,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
