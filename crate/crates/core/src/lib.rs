//! Simulation of non-local two-qubit gates between two separated cavity-QED
//! nodes: an ideal circuit layer and a pulse-level physical layer built on the
//! Jaynes-Cummings model.
//!
//! Conventions: ħ = 1, all frequencies are angular, atom levels are ordered
//! `g = 0`, `e = 1`, third level `= 2`, and cavity levels are Fock numbers.

pub mod error;
pub mod gates;
pub mod jcmodel;
pub mod perturb;
pub mod protocol;
pub mod pulses;
pub mod qstate;
pub mod tolerance;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
