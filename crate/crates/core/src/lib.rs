//! Latent medication-process model for asthma adverse-event risk.
//!
//! A patient's controller medication level is an unobserved path made of
//! Ornstein-Uhlenbeck segments joined by jumps, constrained so that each
//! round's average rounds to the reported step level. Weekly ED/IP visits and
//! round-aggregated rescue and oral-steroid fills follow a log-Gaussian Cox
//! model driven by that path. The crate simulates cohorts, fits the model by
//! parallel Metropolis-within-Gibbs, predicts step-down risk and scores
//! competing fits.

pub mod cohort;
pub mod dens;
pub mod error;
pub mod eval;
pub mod kv;
pub mod latent;
pub mod outcome;
pub mod predict;
pub mod prior;
pub mod process;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
