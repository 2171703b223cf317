//! Desk-scale simulator for a two-leg hard-core-boson realization of a DIII
//! topological superconducting chain.
//!
//! The crate is organized bottom-up:
//!
//! - [`chain_model`]: geometry, zig-zag ordering and fermionic term lists.
//! - [`free_fermion`]: Majorana-matrix solver, zero modes and phase scans.
//! - [`many_body`]: sparse many-body operators on the `2^M` occupation basis.
//! - [`ddm_engine`]: modulation tones, activation bookkeeping, effective
//!   Hamiltonians and tone synthesis.
//! - [`dynamics`]: adaptive time evolution and fidelity metrics.
//! - [`protocols`]: topological qubit preparation and gate experiments.
//! - [`circuit_calibration`]: transmon and coupler formula checks.

pub mod chain_model;
pub mod circuit_calibration;
pub mod ddm_engine;
pub mod dynamics;
pub mod error;
pub mod free_fermion;
pub mod many_body;
pub mod protocols;

pub use error::{Error, ErrorClass, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub(crate) const fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
