use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site index {site} out of range for a space with {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("term references site {0} more than once")]
    DuplicateSite(usize),

    #[error("local factor on site {site} has dimension {found}, site dimension is {expected}")]
    LocalDimension {
        site: usize,
        expected: usize,
        found: usize,
    },

    #[error("operators act on different Hilbert spaces")]
    MixedSpaces,

    #[error("state vector has zero norm")]
    ZeroVector,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("integrator failed: {0}")]
    Integrator(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("dense dimension {dim} exceeds the configured cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("non-physical process: {0}")]
    NonPhysical(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
