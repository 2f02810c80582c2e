use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("expression `{source_text}`: {error}")]
    Parse {
        source_text: String,
        error: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown point `{0}`")]
    UnknownLabel(String),
    #[error("no override for ({from}, {to}) and no default formula")]
    NoDistance { from: String, to: String },
    #[error("distance ({from}, {to}) = {value} is negative or non-finite")]
    BadDistance { from: String, to: String, value: f64 },
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("point {0} lies outside the space")]
    OutsideSpace(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cannot perturb: {0}")]
    Perturb(String),
    #[error("malformed space file: {0}")]
    SpaceFile(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(source_text: &str, error: ParseError) -> Self {
        Error::Parse {
            source_text: source_text.to_string(),
            error,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
