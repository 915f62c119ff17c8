//! Randomized urn designs for adaptive multi-arm allocation, read as
//! stochastic approximation procedures with step `1/n`.

pub mod asymptotics;
pub mod error;
pub mod models;
pub mod montecarlo;
pub mod oracle;
pub mod rng;
pub mod spectral;
pub mod urn;
pub mod validate;

pub use error::{Error, Result};
