use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: empty dataset file")]
    EmptyFile { path: PathBuf },

    #[error("duplicate record_id {0}")]
    DuplicateRecordId(u64),

    #[error("record {record_id}: token id {token} out of range for vocab_size {vocab_size}")]
    TokenOutOfRange {
        record_id: u64,
        token: u32,
        vocab_size: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("modality mismatch: expected {expected}, found {found}")]
    ModalityMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },

    #[error("model {model}: training subset is empty")]
    EmptySubset { model: usize },

    #[error(
        "record {record}: partition row is one-sided ({n_in} models include it, {n_out} exclude it); \
         increase the number of models or reseed the partitions"
    )]
    DegenerateRow { record: usize, n_in: usize, n_out: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss matrix incomplete: {missing} of {total} columns missing")]
    Incomplete { missing: usize, total: usize },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("config {path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::EmptyFile { .. } => "empty_file",
            Error::DuplicateRecordId(_) => "duplicate_record_id",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ModalityMismatch { .. } => "modality_mismatch",
            Error::Format { .. } => "format",
            Error::Checksum { .. } => "checksum",
            Error::EmptySubset { .. } => "empty_subset",
            Error::DegenerateRow { .. } => "degenerate_row",
            Error::Shape(_) => "shape",
            Error::Incomplete { .. } => "incomplete",
            Error::Provenance(_) => "provenance",
            Error::Config { .. } => "config",
        }
    }
}
