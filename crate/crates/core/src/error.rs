use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("unstable time step: {0}")]
    Stability(String),

    #[error("non-finite field at t = {time_ns} ns (z index {z_index})")]
    NonFinite { time_ns: f64, z_index: usize },

    #[error("degenerate data: basis pair {0} has zero total counts")]
    Degenerate(String),

    #[error("expected counts {0} exceed representable range")]
    CountOverflow(f64),

    #[error("nothing retrieved: {0}")]
    NothingRetrieved(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
