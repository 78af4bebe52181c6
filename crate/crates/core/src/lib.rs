//! Simulation and optimal control of two-tone dissipative mechanical squeezing
//! in cavity optomechanics.
//!
//! Two engines evolve the same physics: a truncated Fock-space Lindblad
//! propagator ([`propagator`]) and an exact Gaussian moment integrator
//! ([`moments`]). [`krotov`] shapes the two drive amplitudes to minimize the
//! mechanical `X1` variance, [`protocols`] builds reference pulses, and
//! [`harness`] wires everything into reproducible runs driven by
//! [`config`].

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod fock;
pub mod harness;
pub mod krotov;
pub mod model;
pub mod moments;
pub mod propagator;
pub mod protocols;

pub use error::{Error, Result};
