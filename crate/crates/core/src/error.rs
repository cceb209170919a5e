use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("floor {eps} is infeasible for {n_out} outcomes (must be below {limit})")]
    InfeasibleFloor { eps: f64, n_out: usize, limit: f64 },

    #[error("mass {value:e} at index {index} is below the floor {floor:e}")]
    NumericalDomain {
        index: usize,
        value: f64,
        floor: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}
