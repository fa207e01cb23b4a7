//! Simulation, optimization and learning for RIS-assisted multi-pair UAV downlinks.

pub mod channel;
pub mod error;
pub mod mtl;
pub mod optimizer;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod system;

pub use error::{Constraint, Error, Result};
