use std::path::{Path, PathBuf};

/// Broad category of an [`Error`], used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unmapped characters at positions {positions:?}: {chars:?}")]
    UnmappedCharacters {
        positions: Vec<usize>,
        chars: Vec<char>,
    },

    #[error("symbol {symbol:?} at position {position} is not in the vocabulary")]
    OutOfVocabulary { symbol: String, position: usize },

    #[error("no trainable samples: {0}")]
    EmptyTraining(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::UndefinedMetric(_) | Error::DegenerateData(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
