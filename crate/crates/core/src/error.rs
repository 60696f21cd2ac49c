use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Config` covers anything a user can fix by changing input; `Invariant`
/// signals that an internal consistency check failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("width mismatch: expected {expected} bits, got {actual}")]
    Width { expected: usize, actual: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_width(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Width { expected, actual })
    }
}
