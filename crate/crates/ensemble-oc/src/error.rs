use thiserror::Error;

/// Error taxonomy shared by every module.
///
/// `Input` covers malformed arguments and configs (dimension mismatches,
/// weights off by more than the tolerance, unknown registry names).
/// `Numeric` covers non-finite values produced during evaluation; the message
/// names the operation and the offending inputs. `Unsupported` covers
/// well-formed requests outside a component's contract (e.g. the exact LQ
/// solver on a nonlinear family) and names the alternative when one exists.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}

/// Checks a slice length against an expected dimension, naming the role in
/// the error message.
pub(crate) fn check_dim(role: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::input(format!(
            "{role} has dimension {got}, expected {expected}"
        )));
    }
    Ok(())
}
