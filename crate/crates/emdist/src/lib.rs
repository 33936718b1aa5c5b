//! Poincare-invariant elementary systems, classical and quantum, and the
//! empirical distance between two of them.
//!
//! Layers, bottom up: [`tensor`] (4d tensors and Lorentz transformations),
//! [`classical`] (momentum / angular momentum pairs and their world lines),
//! [`sphere`] (spin-weighted harmonics on the mass shell), [`states`]
//! (symbolic radial profiles and centre-of-mass states), [`operators`]
//! (observables in Newman-Penrose form and their moments), [`distance`]
//! (two-particle operators) and [`experiments`] (configurable sweeps).

pub mod classical;
pub mod distance;
pub mod error;
pub mod experiments;
pub mod operators;
pub mod quadrature;
pub mod sphere;
pub mod states;
pub mod tensor;

pub use error::*;
pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
