//! Cell-free massive MIMO with reconfigurable intelligent surfaces: deployment generation,
//! channel synthesis, RIS phase configuration, MMSE estimation, P-MMSE combining and
//! Monte Carlo spectral-efficiency campaigns.

pub mod channels;
pub mod combining;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod linalg;
pub mod ris;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
pub use seed::derive_seed;
