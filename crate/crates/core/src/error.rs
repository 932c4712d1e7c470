use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid constants or flags; nothing was run.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed call-site input, e.g. a feature vector of the wrong length.
    #[error("input error: {0}")]
    Input(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// `row` is 1-based and counts the header line when one is present.
    #[error("load error at row {row}: {message}")]
    Load { row: usize, message: String },

    #[error("region starvation: accepted {accepted} of {requested} points within {attempts} attempts")]
    RegionStarvation {
        accepted: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("pool exhausted after {accepted} of {requested} requested points")]
    PoolExhausted { accepted: usize, requested: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Runtime aborts that leave a usable partial run behind.
    pub fn is_abort(&self) -> bool {
        matches!(self, Error::RegionStarvation { .. } | Error::PoolExhausted { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
