use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. Maps to CLI exit code 1.
    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty row set passed to {0}")]
    EmptyRows(&'static str),

    #[error("singular normal equations; set l2_reg > 0")]
    Singular,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at(iteration: usize, source: Error) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(source),
        }
    }

    /// Short machine-readable cause tag.
    pub fn cause(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyRows(_) => "empty_rows",
            Error::Singular => "singular",
            Error::AtIteration { source, .. } => source.cause(),
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }

    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) => true,
            Error::AtIteration { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
