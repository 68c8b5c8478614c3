use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("winner requested for a position that is not terminal")]
    NotTerminal,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
