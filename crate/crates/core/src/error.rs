use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
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

    #[error("duplicate claim_id {0:?}")]
    DuplicateClaim(String),

    #[error("claim {claim_id:?}: invalid {field}: {message}")]
    InvalidRecord {
        claim_id: String,
        field: &'static str,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} distinct articles for {needed} folds, found {found}")]
    TooFewArticles { needed: usize, found: usize },

    #[error("annotation for {claim_id:?}: {message}")]
    Annotation { claim_id: String, message: String },

    #[error("generation backend failed after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },

    #[error("search engine {engine} failed after {attempts} attempt(s): {message}")]
    Search {
        engine: String,
        attempts: u32,
        message: String,
    },

    #[error("undefined correlation: {0}")]
    Undefined(String),

    #[error("sample sets differ: {0}")]
    SampleMismatch(String),

    #[error("config: {0}")]
    Config(String),

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
