//! Quantum curriculum learning toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: dense statevector simulation (little-endian qubit order).
//! - [`circuit`] and [`ansatz`]: parameterised circuits and the circuit
//!   families used by the experiments (hardware-efficient ansatz, XY targets,
//!   QCNN variants).
//! - [`exec`]: fused execution and adjoint gradients for training.
//! - [`training`]: losses, parameter-shift gradients, Adam and the training loop.
//! - [`curriculum`]: fidelity-kernel density ratios, curriculum weights and
//!   greedy task ordering.
//! - [`dataloss`]: Lambert-W confidence weights and the thresholded risk.
//! - [`physics`]: cluster-Ising ground states and dataset generation.

pub mod ansatz;
pub mod circuit;
pub mod curriculum;
pub mod dataloss;
mod error;
pub mod exec;
pub mod linalg;
pub mod physics;
pub mod rng;
pub mod sim;
pub mod training;

pub use error::{Error, Result};
pub use num_complex::Complex64;
