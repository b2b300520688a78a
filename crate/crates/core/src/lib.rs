//! Gradient-bridged posteriors for Bayesian models whose parameters include
//! the solution of an optimization sub-problem, sampled with a preconditioned
//! No-U-Turn sampler.

pub mod bridge;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod layout;
pub mod lp;
pub mod models;
pub mod sampler;

pub use error::{DomainError, Error, Result};
