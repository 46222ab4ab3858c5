use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation requested outside the surrogate's validity domain.
    #[error("outside surrogate domain: {0}")]
    Domain(String),

    #[error(
        "rank-deficient design (rank {rank} of {cols} columns); \
         raise the sample count, lower the order or set ridge > 0"
    )]
    RankDeficient { rank: usize, cols: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
