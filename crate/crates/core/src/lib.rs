//! Numerical laboratory for the weakly nonlinear 2-D cubic Schrodinger equation
//! with Gaussian-truncated periodic data.
//!
//! Layers, bottom up: exact complex-Gaussian calculus, initial data and
//! coarse-grained observables, lattice resonance sums, continuum resonant
//! operators, Duhamel expansion terms, random-phase ensembles, and a split-step
//! solver used as ground truth.

pub mod config;
pub mod continuum;
pub mod duhamel;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod initial_data;
pub mod lattice;
pub mod nls;
pub mod quad;
pub mod runner;
pub mod sum;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
