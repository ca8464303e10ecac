use lsi_core::Error;

/// A failed command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or inputs that do not fit together: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Numerical or I/O failure while running: exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e.root() {
            Error::DimensionMismatch { .. }
            | Error::InvalidSpec(_)
            | Error::TrajectoryTooShort { .. }
            | Error::EmptyDataset
            | Error::NoTriples
            | Error::MissingDerivatives
            | Error::MissingVelocities
            | Error::UnsupportedOrder(_)
            | Error::TooManyFreeAxes(_) => CliError::Usage(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Prefixes failures with the file they concern, keeping their classification.
pub trait PathContext<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T, E: Into<CliError>> PathContext<T> for Result<T, E> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| match e.into() {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
        })
    }
}
