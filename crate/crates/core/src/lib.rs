//! Floquet–Bloch analysis of periodic and limit-periodic discrete Schrödinger
//! operators `H = Δ + V` on `Z^d`.

pub mod acmeasure;
pub mod bloch;
pub mod certify;
pub mod config;
pub mod driver;
pub mod error;
pub mod format;
pub mod hierarchy;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod spectral;
pub mod verify;
pub mod scalar;

pub use error::{Error, Result};
