use thiserror::Error;

use crate::model::ChunkId;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument fell outside its admissible range.
    #[error("{what} = {value} is out of range (expected {expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("duplicate chunk id {0}")]
    DuplicateId(ChunkId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("all singular values are zero")]
    ZeroSpectrum,

    #[error("malformed image: {0}")]
    Image(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        expected,
    }
}
