//! Bias-compensated diffusion LMS over networks whose nodes observe noisy
//! regressors.
//!
//! The crate is `no_std` with `alloc`. It provides block-matrix algebra,
//! network topology and combination weights, a synthetic data model, the
//! adaptive algorithms and their mean-square performance model.

#![no_std]

extern crate alloc;

pub mod algorithms;
pub mod blockmat;
pub mod datamodel;
pub mod eigen;
pub mod error;
pub mod network;
pub mod rng;
pub mod theory;

pub use blockmat::{block_kron, bvec, kron, solve, spectral_radius, unbvec, BlockSpec, ComplexMatrix};
pub use error::{Error, Result};
pub use num_complex::Complex64;
