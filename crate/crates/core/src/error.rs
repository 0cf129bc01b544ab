use thiserror::Error;

/// Errors raised by estimation, selection and evaluation routines.
#[derive(Debug, Error)]
pub enum VarxError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("series too short: have {have} observations, need at least {need}")]
    TooShort { have: usize, need: usize },

    #[error("column `{0}` has zero standard deviation and cannot be standardized")]
    ConstantColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl VarxError {
    /// True for errors caused by bad user input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(self, VarxError::Numerical(_) | VarxError::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, VarxError>;
