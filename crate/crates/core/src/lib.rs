//! Pseudo-spectral laboratory for the 2D stochastic Navier–Stokes equations
//! in vorticity form on the `[0, 2π)²` torus, with the additive noise
//! scaled as `c ν^α`.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectral`] — Fourier fields, Biot–Savart, dealiased products.
//! * [`noise`] — forced modes and counter-based Wiener increments.
//! * [`integrator`] — exponential time stepping of the SPDE and its variants.
//! * [`diagnostics`] — norms, energy, Casimirs and entropy of a vorticity.
//! * [`measure`] — time-averaged stationary statistics and balance checks.
//! * [`oracles`] — closed-form stationary laws and a brute-force nonlinearity.
//! * [`experiments`] — sweeps over ν, α and drift amplitude.
//! * [`elliptic`] — the stationary drift-diffusion problem and its modulus
//!   of continuity.

pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod measure;
pub mod noise;
pub mod oracles;
pub mod pool;
pub mod random_fields;
pub mod spectral;

pub use error::{Error, Result};
