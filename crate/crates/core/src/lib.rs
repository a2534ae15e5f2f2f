//! Numerical laboratory for the parabolic Anderson equation
//! `(∂t − ½Δ)u = u ⋄ Ẇ` driven by Gaussian noise that is colored in time
//! and fractional or rough in space.
//!
//! The crate is organized by subsystem:
//!
//! - [`specfn`]: heat kernel, simplex (Dirichlet) integrals, Mittag-Leffler
//!   type series, the Gaussian smoothing integral.
//! - [`noise`]: covariance model, spectral synthesis of noise increments on
//!   periodic grids, probe-based covariance validation.
//! - [`chaos`]: Wiener chaos kernels, Monte Carlo chaos variances and the
//!   closed-form bounds they are compared against.
//! - [`solver`]: pseudospectral exponential-Euler solver for the white-in-time
//!   regime and replicated ensembles.
//! - [`holder`]: increment moments, exponent regression and admissible
//!   exponent regions.
//!
//! All randomness is derived from explicit seeds; see [`rng`].

pub mod chaos;
pub mod error;
pub mod fft;
pub mod holder;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod specfn;
pub mod stats;

pub use error::{Error, Result};
