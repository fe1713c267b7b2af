//! Error type shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not conform for an operation; carries both shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A forward op produced NaN or Inf.
    NumericOverflow { op: &'static str, detail: String },
    /// A similarity logit left the representable range of exp().
    SimilarityOverflow { max_dot: f64 },
    InvalidArgument(String),
    /// Malformed CSV input; `line` is 1-based and includes the header.
    Csv { line: usize, message: String },
    Config(String),
    Checkpoint(String),
    Train(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")
            }
            Error::NumericOverflow { op, detail } => {
                write!(f, "non-finite value produced by `{op}`: {detail}")
            }
            Error::SimilarityOverflow { max_dot } => write!(
                f,
                "similarity logit {max_dot} exceeds the exp() range (700); \
                 enable `normalize_latents` to bound dot products"
            ),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Csv { line, message } => write!(f, "csv line {line}: {message}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Train(msg) => write!(f, "training error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
