use thiserror::Error;

/// CLI failure classes, one per nonzero exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed config, inconsistent options. Exit code 1.
    #[error("usage error: {0}")]
    Usage(String),
    /// Missing/unreadable/ill-formed input data. Exit code 2.
    #[error("data error: {0}")]
    Data(String),
    /// The computation itself failed. Exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }
}

/// Fit-time errors from the core library: invalid configuration is a usage
/// problem, anything numerical maps to exit code 3.
pub fn from_fit_error(e: bisel::Error) -> CliError {
    match e {
        bisel::Error::Validation(m) | bisel::Error::Dimension(m) => CliError::Usage(m),
        bisel::Error::Numerical(m) => CliError::Numerical(m),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
