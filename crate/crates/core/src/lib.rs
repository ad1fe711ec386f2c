//! Coordinate-descent diffusion learning over networks of agents.
//!
//! Every agent runs a stochastic-gradient diffusion step in which each entry
//! of its gradient is dropped independently with a per-agent missing
//! probability. This crate carries the pieces that need no operating system:
//!
//! - [`network`]: topologies, combination matrices, Perron vector and the
//!   agent weights `q = diag(mu) A2 p` used by every steady-state formula;
//! - [`risks`]: mean-square-error and regularized logistic agents with their
//!   Hessians and gradient-noise covariances at the minimizer;
//! - [`diffusion`]: the masked diffusion engine, seeded substreams, and the
//!   linear error-recursion reference used to cross-check the engine;
//! - [`theory`]: closed-form MSD/ER, convergence rates, complexity counts and
//!   comparison bounds between masked and full-gradient learning.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(rust_2018_idioms)]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diffusion;
pub mod linalg;
pub mod network;
pub mod risks;
pub mod theory;

pub use nalgebra::{DMatrix, DVector};

/// `10·log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}
