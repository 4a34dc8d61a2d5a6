//! Simulation and Bayesian nonparametric inference for spatio-temporal
//! Hawkes processes on `S = [0,1] x [0,1]^d`, with Gaussian-process priors on
//! the background rate and the triggering kernel, plus a Monte-Carlo harness
//! that validates the concentration bounds the estimation theory rests on.

pub mod bessel;
pub mod checks;
pub mod distance;
pub mod error;
pub mod fit;
pub mod gp;
pub mod grid;
pub mod kernel;
pub mod likelihood;
pub mod link;
pub mod model;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
