use std::path::PathBuf;

use clozebias_core::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {} invalid line(s):\n  {}", issues.len(), issues.join("\n  "))]
    Lines { path: PathBuf, issues: Vec<String> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] clozebias_core::Error),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl From<ProviderError> for Error {
    fn from(e: ProviderError) -> Self {
        Error::Core(e.into())
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 1 validation, 2 transport, 3 degenerate input.
    pub fn exit_code(&self) -> i32 {
        use clozebias_core::Error as C;
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Core(C::Provider(ProviderError::Transport { .. })) => 2,
            Error::Core(C::Degenerate(_) | C::Oov { .. }) => 3,
            _ => 1,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(stage))
    }
}
