//! Bayesian estimation of linear operators from noisy random-design data,
//! worked entirely in sequence space.
//!
//! The crate is `no_std` (it needs `alloc`). It provides:
//!
//! * [`spectra`]: covariance spectra, prior variances, truth eigenvalues,
//!   the cosine/sine basis overlap and Sobolev-scale diagnostics;
//! * [`sampling`]: keyed random streams, Karhunen–Loève design draws and
//!   realizations of the diagonal and matrix data models;
//! * [`posterior`]: the per-mode conjugate posterior, posterior sampling,
//!   the row-wise ridge estimator of the matrix model and Galerkin truth
//!   matrices for a divergence-form elliptic operator;
//! * [`metrics`]: weighted test errors, excess risk, the generalization gap
//!   and the conditional (noise-averaged) risk in closed form;
//! * [`theory`]: closed-form convergence-rate exponents.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod metrics;
pub mod posterior;
pub mod sampling;
pub mod spectra;
pub mod theory;

pub use error::{Error, Result};
