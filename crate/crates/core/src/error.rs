use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no direct-tunneling window found")]
    NoDtWindow,

    #[error("no Fowler-Nordheim window found")]
    NoFnWindow,

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("no breakdown within the ramp")]
    NoBreakdown,

    #[error("no knee: two-segment fit does not improve on a single line")]
    NoKnee,

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid value: {0}")]
    Invalid(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
