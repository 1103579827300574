//! Full-likelihood Bayesian inference for the Brown–Resnick max-stable process.
//!
//! The crate evaluates the joint density of componentwise maxima and their
//! generating-event partition, samples partitions and parameters by a
//! pseudo-marginal Gibbs/Metropolis scheme, and simulates the process exactly.

pub mod brown_resnick;
pub mod declustering;
pub mod error;
pub mod gaussian;
pub mod likelihood;
pub mod margins;
pub mod mcmc;
pub mod mvn;
pub mod normal;
pub mod partitions;
pub mod seed;
pub mod simulation;

pub use error::{Error, Result};
