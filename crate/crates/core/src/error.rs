use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("evaluation budget exhausted after {used} calls")]
    BudgetExhausted { used: u64 },

    #[error("blackbox output {index} is not finite ({value})")]
    Evaluation { index: usize, value: f64 },

    #[error("degenerate truncation interval [{lower}, {upper}]")]
    DegenerateInterval { lower: f64, upper: f64 },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}
