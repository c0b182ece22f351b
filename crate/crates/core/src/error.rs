use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failures raised by a log-probability provider.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderError {
    /// The store has no record for this sentence.
    MissingScore { sentence: String },
    /// The remote endpoint could not be reached or answered with an error.
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    /// The provider returned a record that violates the record invariants.
    InvalidRecord { sentence: String, message: String },
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::MissingScore { sentence } => {
                write!(f, "no log-probability record for sentence {sentence:?}")
            }
            ProviderError::Transport {
                url,
                attempts,
                message,
            } => write!(
                f,
                "transport error talking to {url} after {attempts} attempt(s): {message}"
            ),
            ProviderError::InvalidRecord { sentence, message } => {
                write!(f, "invalid record for sentence {sentence:?}: {message}")
            }
        }
    }
}

impl core::error::Error for ProviderError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input that makes the computation meaningless (zero vectors, empty sets,
    /// zero probabilities in strict mode, ...).
    Degenerate(String),
    /// Vectors of different lengths were combined.
    DimensionMismatch { expected: usize, found: usize },
    /// None of the requested words exist in the embedding table.
    Oov { words: Vec<String> },
    /// A token span that cannot be scored.
    InvalidSpan(String),
    /// A corpus item or record failed validation.
    Validation(String),
    /// An operation was called on an input that does not meet its precondition.
    Precondition(String),
    /// The requested cloze mode is not applicable to the instance.
    Mode(String),
    Provider(ProviderError),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Oov { words } => write!(f, "no word resolves in the embedding table: {words:?}"),
            Error::InvalidSpan(msg) => write!(f, "invalid span: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition failed: {msg}"),
            Error::Mode(msg) => write!(f, "mode error: {msg}"),
            Error::Provider(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Provider(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ProviderError> for Error {
    fn from(e: ProviderError) -> Self {
        Error::Provider(e)
    }
}
