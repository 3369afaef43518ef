use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Data-quality findings that are *results* rather
/// than failures (e.g. the output of `corpus::validate`) are not errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("missing file for table '{table}': {path}")]
    MissingTableFile { table: String, path: PathBuf },

    #[error("dataset '{dataset}' violates invariants: {detail}")]
    InvalidDataset { dataset: String, detail: String },

    #[error("invalid parameter {name}: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    #[error("unknown estimator '{id}'")]
    UnknownEstimator { id: String },

    #[error("estimator '{id}' cannot train: {detail}")]
    Training { id: String, detail: String },

    #[error("query does not match dataset schema: {detail}")]
    SchemaMismatch { detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("{context}: need at least {needed} items, got {got}")]
    Insufficient {
        context: &'static str,
        needed: usize,
        got: usize,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
