use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {time} outside the covered range [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("state diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("segment not contiguous with buffer: {0}")]
    Contiguity(String),

    #[error("junction value mismatch at t = {time}")]
    Consistency { time: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("certificate not applicable: {0}")]
    CertificateInapplicable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
