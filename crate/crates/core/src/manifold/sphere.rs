use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::SpectralLevel;

/// Round 2-sphere of radius `R`. Only volume, spectrum and constant-solution
/// analysis are available on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sphere<T> {
    radius: T,
    max_degree: usize,
}

impl<T: Scalar> Sphere<T> {
    pub fn new(radius: T, max_degree: usize) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidMetric(format!("sphere radius must be positive, got {radius}")));
        }
        if max_degree == 0 {
            return Err(Error::InvalidManifold("spherical-harmonic degree must be >= 1".into()));
        }
        Ok(Self { radius, max_degree })
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn volume(&self) -> T {
        T::lit(4.0) * T::pi() * self.radius * self.radius
    }

    /// `l(l+1)/R^2` with multiplicity `2l+1`, `l = 1..count`.
    pub fn laplacian_spectrum(&self, count: usize) -> Result<Vec<SpectralLevel<T>>> {
        if count == 0 {
            return Err(Error::InvalidArgument("count must be >= 1".into()));
        }
        let r2 = self.radius * self.radius;
        Ok((1..=count)
            .map(|l| SpectralLevel {
                value: T::of_usize(l * (l + 1)) / r2,
                multiplicity: 2 * l + 1,
            })
            .collect())
    }
}
