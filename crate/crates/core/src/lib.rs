//! Simulation and analysis of error-corrected bosonic phase sensing.
//!
//! A probe mode is prepared in a two-component Fock code, interrogated under
//! photon loss, optionally protected by repeated autonomous correction
//! rounds whose ancilla outcomes are recorded, and finally decoded. The
//! analysis layer turns the resulting fringes into Fisher information and
//! sensitivity figures for phase estimation and radiometry.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channels;
pub mod cli;
pub mod codes;
pub mod error;
pub mod hilbert;
pub mod optimize;
pub mod protocol;

pub use error::{Error, Result};
