//! Shadow-tomography Non-Orthogonal Quantum Eigensolver toolkit.
//!
//! Reference and auxiliary states are prepared as gate-level circuits, measured with
//! random global Clifford unitaries, and the resulting classical shadows are turned
//! into Hamiltonian and overlap matrix elements with U-statistics estimators. The
//! Hadamard-test protocol with zero-noise extrapolation is implemented as a baseline.

pub mod clifford;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod io;
pub mod native;
pub mod noise;
pub mod pauli;
pub mod pipeline;
pub mod shadows;
pub mod sim;
pub mod zne;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
