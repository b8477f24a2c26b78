//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("degenerate direction: vector norm below 1e-30 after {attempts} draw(s)")]
    DegenerateDirection { attempts: usize },

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("invalid label {label}: expected in [0, {k})")]
    InvalidLabel { label: i64, k: usize },

    #[error("class {class} has only {available} examples, need {needed}")]
    InsufficientClassMembers {
        class: i64,
        available: usize,
        needed: usize,
    },

    #[error("csv error at {path}:{line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("permutation search refused: k = {0} exceeds 8")]
    TooManyClasses(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
