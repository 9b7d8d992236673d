//! Self-adversarial training of explicit discrete distributions.
//!
//! A new generator is trained against a frozen copy of the previous one,
//! with the discriminator expressed through the two generators' densities,
//! so no gradient ever has to pass through a discrete sample.

pub mod cli;
pub mod corpus;
pub mod dgsan;
pub mod divergences;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
