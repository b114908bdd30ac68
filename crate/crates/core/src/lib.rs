//! Berezin-Toeplitz semigroup kernels on the plane and the round sphere,
//! estimated from Brownian path integrals and checked against deterministic
//! quadrature, spectral and lattice oracles.

pub mod bergman;
pub mod bundle;
pub mod dk;
pub mod error;
pub mod geometry;
pub mod mc;
pub mod paths;
pub mod quadrature;
pub mod symbol;

pub use error::{Error, Result};
