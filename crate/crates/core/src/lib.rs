//! Measurement and analysis of inter-pulse intensity correlations in
//! decoy-state QKD sources.

pub mod characterize;
pub mod crosscycle;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod photon;
pub mod report;
pub mod security;
pub mod sim;

pub use error::{Error, Result};
