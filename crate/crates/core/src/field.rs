//! Real scalar fields on the reference torus grid.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::manifold::TorusGrid;
use crate::scalar::Scalar;

/// A band-limited real function on the torus, kept both as grid samples and
/// as normalized Fourier coefficients `u_k = N^-d sum_x u(x) e^{-2 pi i k.x}`.
#[derive(Clone, Debug)]
pub struct Field<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    values: Vec<T>,
    coeffs: Vec<Complex<T>>,
}

/// One cosine term `amplitude * cos(2 pi k.x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode<T> {
    pub wavevector: [i64; 3],
    pub amplitude: T,
    pub phase: T,
}

impl<T: Scalar> Mode<T> {
    pub fn cos(wavevector: [i64; 3], amplitude: T) -> Self {
        Self {
            wavevector,
            amplitude,
            phase: T::zero(),
        }
    }
}

impl<T: Scalar> Field<T> {
    pub fn from_coeffs(grid: &Arc<TorusGrid<T>>, mut coeffs: Vec<Complex<T>>) -> Self {
        grid.truncate(&mut coeffs);
        let values = grid.values_from_coeffs(&coeffs);
        Self {
            grid: grid.clone(),
            values,
            coeffs,
        }
    }

    /// Projects grid samples onto the band.
    pub fn from_values(grid: &Arc<TorusGrid<T>>, values: &[T]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} grid values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self::from_coeffs(grid, grid.coeffs_from_values(values)))
    }

    /// Samples `f` at the grid points and projects onto the band.
    pub fn from_fn(grid: &Arc<TorusGrid<T>>, f: impl Fn(&[T]) -> T) -> Self {
        let n = grid.n();
        let values: Vec<T> = (0..grid.len())
            .map(|i| f(&grid.point(i, n)[..grid.dim()]))
            .collect();
        Self::from_coeffs(grid, grid.coeffs_from_values(&values))
    }

    pub fn from_basis(grid: &Arc<TorusGrid<T>>, basis: &DVector<T>) -> Self {
        let coeffs = grid.coeffs_from_basis(basis);
        let values = grid.values_from_coeffs(&coeffs);
        Self {
            grid: grid.clone(),
            values,
            coeffs,
        }
    }

    /// Flat-L2 projection of samples given on the `2N` grid.
    pub fn from_padded(grid: &Arc<TorusGrid<T>>, padded: &[T]) -> Self {
        let coeffs = grid.coeffs_from_padded(padded);
        let values = grid.values_from_coeffs(&coeffs);
        Self {
            grid: grid.clone(),
            values,
            coeffs,
        }
    }

    /// Sum of cosine modes. Fails if a wavevector falls outside the band.
    pub fn from_modes(grid: &Arc<TorusGrid<T>>, modes: &[Mode<T>]) -> Result<Self> {
        let two_pi = T::two_pi();
        for m in modes {
            if m.wavevector[..grid.dim()].iter().any(|c| c.abs() > grid.kmax())
                || m.wavevector[grid.dim()..].iter().any(|&c| c != 0)
            {
                return Err(Error::InvalidArgument(format!(
                    "wavevector {:?} outside the band |k_i| <= {}",
                    m.wavevector,
                    grid.kmax()
                )));
            }
        }
        Ok(Self::from_fn(grid, |x| {
            modes.iter().fold(T::zero(), |acc, m| {
                let dot = x
                    .iter()
                    .zip(m.wavevector.iter())
                    .fold(T::zero(), |s, (&xi, &ki)| s + xi * T::of_i64(ki));
                acc + m.amplitude * (two_pi * dot + m.phase).cos()
            })
        }))
    }

    pub fn zeros(grid: &Arc<TorusGrid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Arc<TorusGrid<T>>, c: T) -> Self {
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); grid.len()];
        coeffs[grid.mode_index(&[0, 0, 0], grid.n())] = Complex::new(c, T::zero());
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            coeffs,
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeff(&self, k: [i64; 3]) -> Complex<T> {
        self.coeffs[self.grid.mode_index(&k, self.grid.n())]
    }

    pub fn to_basis(&self) -> DVector<T> {
        self.grid.basis_from_coeffs(&self.coeffs)
    }

    /// Samples on the `2N` quadrature grid.
    pub fn padded(&self) -> Vec<T> {
        self.grid.padded_from_coeffs(&self.coeffs)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        *self.grid == *other.grid
    }

    /// Flat mean `int u dx`.
    pub fn mean(&self) -> T {
        self.coeff([0, 0, 0]).re
    }

    /// Flat L2 norm.
    pub fn l2_norm(&self) -> T {
        self.to_basis().norm()
    }

    /// Flat L2 inner product.
    pub fn dot(&self, other: &Self) -> T {
        self.to_basis().dot(&other.to_basis())
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    /// Evaluates the trigonometric interpolant at an arbitrary point.
    pub fn evaluate(&self, x: &[T]) -> T {
        let two_pi = T::two_pi();
        let mut total = self.coeff([0, 0, 0]).re;
        for k in self.grid.half_modes() {
            let c = self.coeff(*k);
            let theta = (0..self.grid.dim()).fold(T::zero(), |s, a| s + x[a] * T::of_i64(k[a]))
                * two_pi;
            total += (c.re * theta.cos() - c.im * theta.sin()) * T::lit(2.0);
        }
        total
    }

    /// The field translated by `shift`: `x -> u(x - shift)`.
    pub fn shifted(&self, shift: &[T]) -> Self {
        let two_pi = T::two_pi();
        let n = self.grid.n();
        let mut coeffs = self.coeffs.clone();
        for k in self.grid.half_modes() {
            let theta = -(0..self.grid.dim()).fold(T::zero(), |s, a| s + shift[a] * T::of_i64(k[a]))
                * two_pi;
            let rot = Complex::new(theta.cos(), theta.sin());
            let p = self.grid.mode_index(k, n);
            let q = self.grid.mode_index(&[-k[0], -k[1], -k[2]], n);
            coeffs[p] *= rot;
            coeffs[q] = coeffs[p].conj();
        }
        Self::from_coeffs(&self.grid, coeffs)
    }

    /// Partial derivative along coordinate `axis`.
    pub fn partial(&self, axis: usize) -> Self {
        let n = self.grid.n();
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); self.coeffs.len()];
        for k in self.grid.half_modes() {
            let factor = Complex::new(T::zero(), T::lit(2.0 * PI) * T::of_i64(k[axis]));
            let p = self.grid.mode_index(k, n);
            let q = self.grid.mode_index(&[-k[0], -k[1], -k[2]], n);
            coeffs[p] = self.coeffs[p] * factor;
            coeffs[q] = coeffs[p].conj();
        }
        Self::from_coeffs(&self.grid, coeffs)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: T, other: &Self) -> Self {
        debug_assert!(self.same_grid(other));
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + alpha * b)
                .collect(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| a + b.scale(alpha))
                .collect(),
        }
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&a| alpha * a).collect(),
            coeffs: self.coeffs.iter().map(|&a| a.scale(alpha)).collect(),
        }
    }
}

impl<T: Scalar> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.axpy(T::one(), rhs)
    }
}

impl<T: Scalar> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.axpy(-T::one(), rhs)
    }
}

impl<T: Scalar> Mul<T> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: T) -> Field<T> {
        self.scale(rhs)
    }
}

impl<T: Scalar> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.scale(-T::one())
    }
}

/// Element `(u, t)` of the augmented space (field times multiplier coordinate).
#[derive(Clone, Debug)]
pub struct AugmentedVector<T: Scalar> {
    pub field: Field<T>,
    pub scalar: T,
}

impl<T: Scalar> AugmentedVector<T> {
    pub fn new(field: Field<T>, scalar: T) -> Self {
        Self { field, scalar }
    }

    /// Stacked basis coordinates `[field basis..., scalar]`.
    pub fn to_vector(&self) -> DVector<T> {
        let b = self.field.to_basis();
        let n = b.len();
        DVector::from_fn(n + 1, |i, _| if i < n { b[i] } else { self.scalar })
    }

    pub fn from_vector(grid: &Arc<TorusGrid<T>>, v: &DVector<T>) -> Self {
        let n = grid.basis_dim();
        let field = Field::from_basis(grid, &v.rows(0, n).into_owned());
        Self {
            field,
            scalar: v[n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Arc<TorusGrid<f64>> {
        TorusGrid::new(2, 16).unwrap()
    }

    #[test]
    fn round_trip_grid_spectral_grid() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (2.0 * PI * x[0]).sin() + 0.3 * (2.0 * PI * (x[0] + 2.0 * x[1])).cos());
        let again = Field::from_values(&g, u.values()).unwrap();
        let scale = u.max_abs();
        for (a, b) in u.values().iter().zip(again.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn coefficients_are_hermitian() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (x[0] * 7.3).sin() * (x[1] * 3.1).cos());
        for k in g.half_modes() {
            let a = u.coeff(*k);
            let b = u.coeff([-k[0], -k[1], -k[2]]);
            assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
            assert_relative_eq!(a.im, -b.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn basis_is_flat_orthonormal() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        // sqrt2 cos has unit norm, so cos has norm 1/sqrt2
        assert_relative_eq!(u.l2_norm(), 0.5f64.sqrt(), epsilon = 1e-14);
        let b = u.to_basis();
        let back = Field::from_basis(&g, &b);
        for (a, c) in u.values().iter().zip(back.values()) {
            assert_relative_eq!(a, c, epsilon = 1e-14);
        }
    }

    #[test]
    fn padded_samples_interpolate() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (2.0 * PI * 3.0 * x[1]).sin());
        let p = u.padded();
        let m = g.padded_n();
        for idx in [0usize, 5, 77, 300] {
            let x = g.point(idx, m);
            assert_relative_eq!(p[idx], (2.0 * PI * 3.0 * x[1]).sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn shift_and_derivative() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (2.0 * PI * x[0]).cos());
        let s = u.shifted(&[0.25, 0.0]);
        let expected = Field::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        assert!((&s - &expected).max_abs() < 1e-13);
        let du = u.partial(0);
        let expected = Field::from_fn(&g, |x| -2.0 * PI * (2.0 * PI * x[0]).sin());
        assert!((&du - &expected).max_abs() < 1e-12);
        assert_relative_eq!(u.evaluate(&[0.1, 0.7]), (0.2 * PI).cos(), epsilon = 1e-13);
    }

    #[test]
    fn three_dimensional_grid() {
        let g = TorusGrid::<f64>::new(3, 16).unwrap();
        assert_eq!(g.basis_dim(), 15usize.pow(3));
        let u = Field::from_fn(&g, |x| (2.0 * PI * (x[0] - x[2])).cos());
        assert_relative_eq!(u.l2_norm(), 0.5f64.sqrt(), epsilon = 1e-14);
    }
}
