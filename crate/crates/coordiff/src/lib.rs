//! Simulation harness, scenario files and command-line front end for
//! coordinate-descent diffusion learning.
//!
//! The numerical core lives in [`coordiff_core`]; this crate adds scenario
//! documents ([`cli::config`]), Monte-Carlo ensembles and comparison reports
//! ([`experiments`]), and the `coordiff` binary.

pub mod cli;
pub mod experiments;

pub use coordiff_core as core;
