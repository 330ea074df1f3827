use thiserror::Error;

/// Errors raised by kernel construction, quadrature, geometry and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("divergent quantity: {0}")]
    Divergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("kernel bound violated: acceptance probability {0} outside [0, 1]")]
    KernelBound(f64),
    #[error("no cone of the kernel reaches the target point")]
    NoCone,
    #[error("no feasible auxiliary centre found (worst margins {0:?})")]
    Infeasible([f64; 4]),
    #[error("estimation failure: {0}")]
    Estimation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
