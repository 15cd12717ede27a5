use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ontology line {line}: {message}")]
    Ontology { line: usize, message: String },

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("invalid BIO tags: {0}")]
    InvalidTags(String),

    #[error("encoder input: {0}")]
    Encoder(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("malformed parse tree: {0}")]
    Tree(String),

    #[error("{context}: {message}")]
    Data { context: String, message: String },

    #[error("training diverged: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn ontology(line: usize, message: impl Into<String>) -> Self {
        Error::Ontology {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            context: context.into(),
            message: message.into(),
        }
    }
}
