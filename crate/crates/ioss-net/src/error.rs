use thiserror::Error;

/// Errors shared across the verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value produced at node {node}: {context}")]
    NonFinite { node: usize, context: String },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("numeric failure in block {block}: {context}")]
    Numeric { block: usize, context: String },

    #[error("invalid certificate: {0}")]
    Certificate(String),

    #[error("small-gain precondition violated: {0}")]
    SmallGain(String),

    #[error("composition failure: {0}")]
    Composition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
