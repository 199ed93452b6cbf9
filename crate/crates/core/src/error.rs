use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum FracvolError {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A run configuration is inconsistent or insufficient for the
    /// requested accuracy (grids, path counts, history length).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure failed to reach its target accuracy.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The calibration inputs do not identify the requested parameters.
    #[error("under-identified: {0}")]
    UnderIdentified(String),

    /// An input file violates the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, FracvolError>;

pub(crate) fn domain(msg: impl Into<String>) -> FracvolError {
    FracvolError::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> FracvolError {
    FracvolError::Config(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> FracvolError {
    FracvolError::Numerical(msg.into())
}

pub(crate) fn schema(msg: impl Into<String>) -> FracvolError {
    FracvolError::Schema(msg.into())
}

pub(crate) fn under_identified(msg: impl Into<String>) -> FracvolError {
    FracvolError::UnderIdentified(msg.into())
}
