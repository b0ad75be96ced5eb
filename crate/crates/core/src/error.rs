use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected {expected}, found {found}")]
    LayerDimension {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("depth mismatch: {0}")]
    Depth(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point lies outside the simplex (min barycentric weight {min_weight:e})")]
    OutsideSimplex { min_weight: f64 },

    #[error("reference solver failed: {0}")]
    Oracle(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Oracle(_) => 3,
            Error::Verification(_) => 4,
            Error::Io(_) => 1,
            Error::Internal(_) => 70,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Oracle("x".into()).exit_code(), 3);
        assert_eq!(Error::Verification("x".into()).exit_code(), 4);
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Parse("x".into()).exit_code(), 2);
        assert_eq!(invalid("x").exit_code(), 2);
    }
}
