//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enum. The variants map onto the CLI exit codes:
/// configuration/dimension errors exit 2, data/statistics errors exit 3,
/// numeric errors exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("statistics error: {0}")]
    Stats(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefix the message with the location (e.g. a network block name)
    /// where the failure surfaced.
    pub fn at(self, location: &str) -> Error {
        match self {
            Error::Dimension(m) => Error::Dimension(format!("{location}: {m}")),
            Error::Config(m) => Error::Config(format!("{location}: {m}")),
            Error::Data(m) => Error::Data(format!("{location}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{location}: {m}")),
            Error::Stats(m) => Error::Stats(format!("{location}: {m}")),
            Error::Io(m) => Error::Io(format!("{location}: {m}")),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            Error::Data(_) | Error::Stats(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Attach a location to the error of a fallible expression.
pub trait ResultExt<T> {
    fn at(self, location: &str) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn at(self, location: &str) -> Result<T> {
        self.map_err(|e| e.at(location))
    }
}
