//! Interior Neumann problem for the Kohn-Laplacian `L_0 = (1/4) Σ (X_j² + Y_j²)`
//! on the unit Korányi ball of the Heisenberg group.
//!
//! The crate is organised bottom-up: group arithmetic and finite-difference
//! operators, special functions, closed-form and series kernels, quadrature on
//! the ball and sphere, layer potentials with their Nyström discretisation,
//! and the two end-to-end solvers.

pub mod error;
pub mod field;
pub mod group;
pub mod kernels;
pub mod layer;
pub mod operators;
pub mod quadrature;
pub mod series;
pub mod solver;
pub mod special;
pub mod suite;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use group::{gauge_norm, group_mul, inverse, inversion, HPoint, Polar};
pub use num_complex::Complex64;
pub use operators::{CharacteristicPolicy, StencilParams, VectorField};
