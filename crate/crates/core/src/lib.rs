//! Bayesian changepoint detection for m-dependent data.
//!
//! Within each segment the data are modelled as a moving sum of `m + 1`
//! consecutive iid latent variables from a conjugate family. The crate
//! provides the latent-space geometry ([`series_space`]), closed-form segment
//! likelihoods ([`families`]), a reversible-jump sampler ([`sampler`]), forward
//! simulation ([`simulator`]) and estimation and scoring tools
//! ([`evaluation`]).

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod families;
pub mod par;
pub mod sampler;
pub mod series_space;
pub mod simulator;

pub use error::{Error, Result};
