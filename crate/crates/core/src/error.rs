use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible pilot plan for method {method} with R = {ris_count}: tau_p = {tau_p} >= tau_c = {tau_c}")]
    InfeasiblePlan {
        method: u8,
        ris_count: usize,
        tau_p: usize,
        tau_c: usize,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
