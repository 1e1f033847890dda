//! Markov chain Monte Carlo for the joint outcome and medication model.

pub mod config;
pub mod diag;
pub mod forward;
pub mod globals;
pub mod patient;
pub mod run;
pub mod state;
pub mod store;

pub use config::{FitConfig, Variant};
pub use patient::SweepConsts;
pub use run::{
    fit_variant, init_state, run_chains, sweep, ChainState, Diagnostic, PatientDraw,
    PosteriorSample,
};
pub use state::{PatientData, PatientState};
pub use store::{read_posterior, scalar_names, scalars, write_posterior};
