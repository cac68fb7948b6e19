//! Simulation harness, configuration, output and validation for learning
//! linear operators with Gaussian-process priors.

pub mod config;
pub mod error;
pub mod harness;
pub mod output;
pub mod rates;
pub mod validate;

pub use error::{HarnessError, Result};
