//! Fock-space and center-of-mass numerics for a Schrödinger wave coupled to a
//! Gaussian random field.

pub mod checks;
pub mod cm;
pub mod error;
pub mod fock;
pub mod grid;
pub mod noise;
pub mod norms;
pub mod propagator;
pub mod rng;
pub mod semiclassics;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridSpec, C64};
