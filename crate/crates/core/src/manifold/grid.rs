//! Reference discretization of the unit torus `[0,1)^d`.
//!
//! Fields are trigonometric polynomials with modes `|k_i| <= N/2 - 1` (the
//! Nyquist row is dropped so every band-limited field is real). Nonlinear and
//! metric-weighted products are evaluated on a `2N` grid, which projects
//! cubic nonlinearities back onto the band without aliasing.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub struct TorusGrid<T: Scalar> {
    dim: usize,
    n: usize,
    kmax: i64,
    /// Half set of nonzero modes: first nonzero component positive.
    modes: Vec<[i64; 3]>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    fwd_pad: Arc<dyn Fft<T>>,
    inv_pad: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for TorusGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

impl<T: Scalar> PartialEq for TorusGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n
    }
}

impl<T: Scalar> TorusGrid<T> {
    /// Grid with `n` points per axis on the `dim`-torus.
    pub fn new(dim: usize, n: usize) -> Result<Arc<Self>> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidManifold(format!(
                "torus dimension must be 2 or 3, got {dim}"
            )));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidManifold(format!(
                "grid resolution must be a power of two >= 16, got {n}"
            )));
        }
        let kmax = (n / 2 - 1) as i64;
        let mut modes = Vec::new();
        let range = -kmax..=kmax;
        for k0 in range.clone() {
            for k1 in range.clone() {
                let k2_range = if dim == 3 { range.clone() } else { 0..=0 };
                for k2 in k2_range {
                    let k = [k0, k1, k2];
                    if let Some(first) = k.iter().find(|&&c| c != 0) {
                        if *first > 0 {
                            modes.push(k);
                        }
                    }
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            dim,
            n,
            kmax,
            modes,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            fwd_pad: planner.plan_fft_forward(2 * n),
            inv_pad: planner.plan_fft_inverse(2 * n),
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kmax(&self) -> i64 {
        self.kmax
    }

    /// Number of grid points, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn padded_n(&self) -> usize {
        2 * self.n
    }

    pub fn padded_len(&self) -> usize {
        self.padded_n().pow(self.dim as u32)
    }

    /// Dimension of the real discrete function space, `(N-1)^d`.
    pub fn basis_dim(&self) -> usize {
        1 + 2 * self.modes.len()
    }

    /// Wavevectors of the half set, in basis order (basis entries `2j+1`, `2j+2`).
    pub fn half_modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    /// Wavevector attached to a basis index (the constant maps to zero).
    pub fn basis_mode(&self, index: usize) -> [i64; 3] {
        if index == 0 {
            [0, 0, 0]
        } else {
            self.modes[(index - 1) / 2]
        }
    }

    /// Flat index of mode `k` on a grid with `m` points per axis.
    pub fn mode_index(&self, k: &[i64; 3], m: usize) -> usize {
        let mi = m as i64;
        (0..self.dim).fold(0, |acc, a| acc * m + k[a].rem_euclid(mi) as usize)
    }

    /// Coordinates of grid point `idx` on a grid with `m` points per axis.
    pub fn point(&self, idx: usize, m: usize) -> [T; 3] {
        let mut out = [T::zero(); 3];
        let mut rest = idx;
        let h = T::one() / T::of_usize(m);
        for a in (0..self.dim).rev() {
            out[a] = T::of_usize(rest % m) * h;
            rest /= m;
        }
        out
    }

    fn plans(&self, m: usize, inverse: bool) -> &Arc<dyn Fft<T>> {
        match (m == self.n, inverse) {
            (true, false) => &self.fwd,
            (true, true) => &self.inv,
            (false, false) => &self.fwd_pad,
            (false, true) => &self.inv_pad,
        }
    }

    /// Unnormalized d-dimensional transform in place on an `m^d` array.
    fn transform(&self, data: &mut [Complex<T>], m: usize, inverse: bool) {
        let plan = self.plans(m, inverse);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        for row in data.chunks_exact_mut(m) {
            plan.process_with_scratch(row, &mut scratch);
        }
        let mut line = vec![Complex::new(T::zero(), T::zero()); m];
        for axis in 0..self.dim - 1 {
            let stride = m.pow((self.dim - 1 - axis) as u32);
            let block = stride * m;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + offset + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, value) in line.iter().enumerate() {
                        data[base + offset + i * stride] = *value;
                    }
                }
            }
        }
    }

    fn forward(&self, values: &[T], m: usize) -> Vec<Complex<T>> {
        let mut data: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut data, m, false);
        let scale = T::one() / T::of_usize(data.len());
        for c in data.iter_mut() {
            *c = c.scale(scale);
        }
        data
    }

    fn inverse(&self, mut data: Vec<Complex<T>>, m: usize) -> Vec<T> {
        self.transform(&mut data, m, true);
        data.into_iter().map(|c| c.re).collect()
    }

    fn in_band(&self, k: &[i64; 3]) -> bool {
        k[..self.dim].iter().all(|c| c.abs() <= self.kmax)
    }

    fn signed_mode(&self, idx: usize, m: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        let mut rest = idx;
        let mi = m as i64;
        for a in (0..self.dim).rev() {
            let c = (rest % m) as i64;
            k[a] = if c > mi / 2 { c - mi } else { c };
            rest /= m;
        }
        k
    }

    /// Band-limited Fourier coefficients (layout of the `N` grid) of grid samples.
    pub fn coeffs_from_values(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut coeffs = self.forward(values, self.n);
        self.truncate(&mut coeffs);
        coeffs
    }

    /// Zeroes every coefficient outside the band and symmetrizes the rest.
    pub(crate) fn truncate(&self, coeffs: &mut [Complex<T>]) {
        let zero = Complex::new(T::zero(), T::zero());
        for idx in 0..coeffs.len() {
            let k = self.signed_mode(idx, self.n);
            if !self.in_band(&k) || k[..self.dim].contains(&((self.n / 2) as i64)) {
                coeffs[idx] = zero;
            }
        }
        let half = T::lit(0.5);
        for k in &self.modes {
            let p = self.mode_index(k, self.n);
            let q = self.mode_index(&[-k[0], -k[1], -k[2]], self.n);
            let avg = (coeffs[p] + coeffs[q].conj()).scale(half);
            coeffs[p] = avg;
            coeffs[q] = avg.conj();
        }
        let z = self.mode_index(&[0, 0, 0], self.n);
        coeffs[z].im = T::zero();
    }

    pub fn values_from_coeffs(&self, coeffs: &[Complex<T>]) -> Vec<T> {
        self.inverse(coeffs.to_vec(), self.n)
    }

    /// Samples of a band-limited field on the `2N` grid.
    pub fn padded_from_coeffs(&self, coeffs: &[Complex<T>]) -> Vec<T> {
        let m = self.padded_n();
        let mut data = vec![Complex::new(T::zero(), T::zero()); self.padded_len()];
        let zero = self.mode_index(&[0, 0, 0], self.n);
        data[self.mode_index(&[0, 0, 0], m)] = coeffs[zero];
        for k in &self.modes {
            let neg = [-k[0], -k[1], -k[2]];
            data[self.mode_index(k, m)] = coeffs[self.mode_index(k, self.n)];
            data[self.mode_index(&neg, m)] = coeffs[self.mode_index(&neg, self.n)];
        }
        self.inverse(data, m)
    }

    /// Flat L2 projection onto the band of samples given on the `2N` grid.
    pub fn coeffs_from_padded(&self, padded: &[T]) -> Vec<Complex<T>> {
        let m = self.padded_n();
        let full = self.forward(padded, m);
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); self.len()];
        let zero = self.mode_index(&[0, 0, 0], self.n);
        coeffs[zero] = Complex::new(full[self.mode_index(&[0, 0, 0], m)].re, T::zero());
        for k in &self.modes {
            let c = full[self.mode_index(k, m)];
            coeffs[self.mode_index(k, self.n)] = c;
            coeffs[self.mode_index(&[-k[0], -k[1], -k[2]], self.n)] = c.conj();
        }
        coeffs
    }

    /// Real orthonormal-basis coordinates (`1`, `sqrt2 cos`, `sqrt2 sin`).
    pub fn basis_from_coeffs(&self, coeffs: &[Complex<T>]) -> DVector<T> {
        let s2 = T::lit(SQRT_2);
        let mut out = DVector::zeros(self.basis_dim());
        out[0] = coeffs[self.mode_index(&[0, 0, 0], self.n)].re;
        for (j, k) in self.modes.iter().enumerate() {
            let c = coeffs[self.mode_index(k, self.n)];
            out[2 * j + 1] = s2 * c.re;
            out[2 * j + 2] = -s2 * c.im;
        }
        out
    }

    pub fn coeffs_from_basis(&self, basis: &DVector<T>) -> Vec<Complex<T>> {
        let inv_s2 = T::lit(1.0 / SQRT_2);
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); self.len()];
        coeffs[self.mode_index(&[0, 0, 0], self.n)] = Complex::new(basis[0], T::zero());
        for (j, k) in self.modes.iter().enumerate() {
            let c = Complex::new(basis[2 * j + 1] * inv_s2, -basis[2 * j + 2] * inv_s2);
            coeffs[self.mode_index(k, self.n)] = c;
            coeffs[self.mode_index(&[-k[0], -k[1], -k[2]], self.n)] = c.conj();
        }
        coeffs
    }

    pub fn padded_from_basis(&self, basis: &DVector<T>) -> Vec<T> {
        self.padded_from_coeffs(&self.coeffs_from_basis(basis))
    }

    pub fn basis_from_padded(&self, padded: &[T]) -> DVector<T> {
        self.basis_from_coeffs(&self.coeffs_from_padded(padded))
    }

    /// `sum_x f(x) / M^d` over the `2N` grid.
    pub fn padded_mean(&self, padded: &[T]) -> T {
        padded.iter().fold(T::zero(), |acc, &v| acc + v) / T::of_usize(padded.len())
    }
}
