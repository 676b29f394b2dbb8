//! Operator formulation of the volume-constrained Allen-Cahn problem
//!
//! ```text
//!   -eps^2 Lap_g u + W'(u) = lambda,     int_M u dmu_g = nu
//! ```
//!
//! on flat tori (constant metrics, optionally conformally deformed) with a
//! Fourier-Galerkin discretization, plus nondegeneracy analysis of its
//! solutions through the linearized problem
//!
//! ```text
//!   -eps^2 Lap_g v + W''(u) v = Lambda,  int_M v dmu_g = 0.
//! ```
//!
//! The crate is generic over the scalar type; [`f64`] aliases are provided at
//! the root for everyday use.

pub mod degeneracy;
pub mod error;
pub mod field;
pub mod linalg;
pub mod manifold;
pub mod operators;
pub mod potential;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use field::{AugmentedVector, Field, Mode};
pub use manifold::{Manifold, Sphere, SpectralLevel, Torus, TorusGrid, TorusMetric};
pub use potential::{Nonlinearity, Order, Potential};
pub use scalar::Scalar;

pub type Field64 = Field<f64>;
pub type Torus64 = Torus<f64>;
pub type Potential64 = Potential<f64>;
pub type Manifold64 = Manifold<f64>;
pub type Solution64 = solver::Solution<f64>;
pub type DegeneracyReport64 = degeneracy::DegeneracyReport<f64>;

pub type Field32 = Field<f32>;
pub type Torus32 = Torus<f32>;
