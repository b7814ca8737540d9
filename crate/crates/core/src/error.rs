use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("token id {0} is outside the vocabulary")]
    OutOfVocabulary(usize),

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("cannot tokenize input at byte offset {offset}: no vocabulary entry matches {rest:?}")]
    Tokenize { offset: usize, rest: String },

    #[error("invalid distribution for context {context}: {reason}")]
    Distribution { context: String, reason: String },

    #[error("model file line {line}: {reason}")]
    ModelFile { line: usize, reason: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("malformed word: {0}")]
    MalformedWord(String),

    #[error("boundary mass is zero before a word at token position {position}; the WT rescaling is undefined")]
    ZeroBoundaryMass { position: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration of {words} words exceeds the budget of {budget}")]
    EnumerationBudget { words: u128, budget: u128 },

    #[error("record line {line}, field {field}: {reason}")]
    Record {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("reading-time data: {0}")]
    ReadingTimes(String),

    #[error("alignment failed for sentence {sid:?}, word {widx}: {reason}")]
    Alignment {
        sid: String,
        widx: usize,
        reason: String,
    },

    #[error("design matrix: {0}")]
    Design(String),

    #[error("singular design; collinear columns: {}", columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("fit comparison: {0}")]
    Comparison(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
