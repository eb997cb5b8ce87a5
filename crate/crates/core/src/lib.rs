#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Heralded two-qubit states of the single-photon entanglement protocol.
//!
//! The crate computes the state heralded by a single click behind a beam
//! splitter when two remote emitters are prepared in √α|0⟩ + √(1−α)|1⟩ and
//! excited state-selectively, including photon loss, noise clicks, double
//! excitation, imperfect pulses and frequency/phase noise.

pub mod cli;
pub mod config;
pub mod error;
pub mod fitlab;
pub mod montecarlo;
pub mod nv;
pub mod optimize;
pub mod protocol;
pub mod pulsesim;
pub mod quadrature;

pub use error::{HeraldError, Result};
