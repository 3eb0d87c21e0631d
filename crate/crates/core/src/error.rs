use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("network reduces to a single node; instance is trivially solved")]
    TriviallySolved,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("oracle refused to certify: {0}")]
    Uncertified(String),
    #[error("instance exceeds size cap: {0}")]
    SizeCap(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
