//! Closed manifolds and metrics: flat tori `R^d / Z^d` with a constant SPD
//! metric (optionally conformally deformed in 2D) and round 2-spheres.

mod grid;
mod sphere;
mod spectrum;
mod torus;

pub use grid::TorusGrid;
pub use sphere::Sphere;
pub use spectrum::{group_levels, SpectralLevel};
pub use torus::{Torus, TorusMetric, DENSE_LIMIT};

use crate::error::Result;
use crate::scalar::Scalar;

/// Either supported manifold family.
#[derive(Clone, Debug)]
pub enum Manifold<T: Scalar> {
    Torus(Torus<T>),
    Sphere(Sphere<T>),
}

impl<T: Scalar> Manifold<T> {
    /// Riemannian volume `mu_g(M)`.
    pub fn volume(&self) -> T {
        match self {
            Manifold::Torus(t) => t.volume(),
            Manifold::Sphere(s) => s.volume(),
        }
    }

    /// Topological dimension.
    pub fn dimension(&self) -> usize {
        match self {
            Manifold::Torus(t) => t.dim(),
            Manifold::Sphere(_) => 2,
        }
    }

    /// First `count` distinct nonzero eigenvalues of `-Laplace_g`, ascending.
    pub fn laplacian_spectrum(&self, count: usize) -> Result<Vec<SpectralLevel<T>>> {
        match self {
            Manifold::Torus(t) => t.laplacian_spectrum(count),
            Manifold::Sphere(s) => s.laplacian_spectrum(count),
        }
    }
}

impl<T: Scalar> From<Torus<T>> for Manifold<T> {
    fn from(t: Torus<T>) -> Self {
        Manifold::Torus(t)
    }
}

impl<T: Scalar> From<Sphere<T>> for Manifold<T> {
    fn from(s: Sphere<T>) -> Self {
        Manifold::Sphere(s)
    }
}
