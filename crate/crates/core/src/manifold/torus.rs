use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{group_levels, SpectralLevel, TorusGrid};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::{generalized_symmetric_eigen, lobpcg, pcg, LobpcgOptions};
use crate::scalar::Scalar;

/// Augmented dimensions up to this size use dense factorizations.
pub const DENSE_LIMIT: usize = 1100;

/// Metric `e^{2 phi} G` on the unit torus: constant SPD matrix `G` and an
/// optional band-limited conformal exponent `phi` (2D only).
#[derive(Clone, Debug)]
pub struct TorusMetric<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub phi: Option<Field<T>>,
}

impl<T: Scalar> TorusMetric<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            phi: None,
        }
    }

    pub fn constant(matrix: DMatrix<T>) -> Self {
        Self { matrix, phi: None }
    }

    pub fn with_phi(mut self, phi: Field<T>) -> Self {
        self.phi = Some(phi);
        self
    }
}

/// A torus with its metric and the metric-dependent quadrature data.
#[derive(Clone, Debug)]
pub struct Torus<T: Scalar> {
    grid: Arc<TorusGrid<T>>,
    metric: TorusMetric<T>,
    inverse: DMatrix<T>,
    sqrt_det: T,
    /// `4 pi^2 k^T G^-1 k sqrt(det G)` per basis index.
    stiffness: DVector<T>,
    /// `e^{2 phi} sqrt(det G)` on the padded grid, when `phi` is present.
    density: Option<Vec<T>>,
    volume: T,
}

impl<T: Scalar> Torus<T> {
    pub fn new(grid: Arc<TorusGrid<T>>, metric: TorusMetric<T>) -> Result<Self> {
        let d = grid.dim();
        let g = &metric.matrix;
        if g.nrows() != d || g.ncols() != d {
            return Err(Error::InvalidMetric(format!(
                "metric matrix must be {d}x{d}, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let scale = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if (g - g.transpose()).amax() > T::lit(1e-12) * scale {
            return Err(Error::InvalidMetric("metric matrix is not symmetric".into()));
        }
        let sym = (g + g.transpose()) * T::lit(0.5);
        let eigs = sym.clone().symmetric_eigenvalues();
        if eigs.iter().any(|&e| !(e > T::zero())) {
            return Err(Error::InvalidMetric(format!(
                "metric matrix is not positive definite (eigenvalues {:?})",
                eigs.as_slice()
            )));
        }
        let inverse = sym
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidMetric("singular metric matrix".into()))?;
        let sqrt_det = sym.determinant().sqrt();
        let four_pi2 = T::lit(4.0) * T::pi() * T::pi();
        let stiffness = DVector::from_fn(grid.basis_dim(), |i, _| {
            let k = grid.basis_mode(i);
            let mut q = T::zero();
            for a in 0..d {
                for b in 0..d {
                    q += T::of_i64(k[a]) * inverse[(a, b)] * T::of_i64(k[b]);
                }
            }
            four_pi2 * q * sqrt_det
        });
        let density: Option<Vec<T>> = match &metric.phi {
            None => None,
            Some(phi) => {
                if d != 2 {
                    return Err(Error::InvalidMetric("conformal factors are supported on 2-tori only".into()));
                }
                if **phi.grid() != *grid {
                    return Err(Error::GridMismatch);
                }
                let limit = grid.kmax() / 2;
                let norm = phi.l2_norm();
                let outside = grid
                    .half_modes()
                    .iter()
                    .filter(|k| k.iter().any(|c| c.abs() > limit))
                    .fold(T::zero(), |m, k| { let c = phi.coeff(*k); m.max((c.re * c.re + c.im * c.im).sqrt()) });
                if outside > T::lit(1e-13) * norm.max(T::one()) {
                    return Err(Error::InvalidMetric(format!(
                        "conformal factor must be band-limited to |k_i| <= {limit}"
                    )));
                }
                Some(
                    phi.padded()
                        .into_iter()
                        .map(|p| (T::lit(2.0) * p).exp() * sqrt_det)
                        .collect(),
                )
            }
        };
        let volume = match &density {
            None => sqrt_det,
            Some(rho) => grid.padded_mean(rho),
        };
        Ok(Self {
            grid,
            metric: TorusMetric {
                matrix: sym,
                phi: metric.phi,
            },
            inverse,
            sqrt_det,
            stiffness,
            density,
            volume,
        })
    }

    /// Unit square torus with the identity metric.
    pub fn flat(dim: usize, n: usize) -> Result<Self> {
        Self::new(TorusGrid::new(dim, n)?, TorusMetric::identity(dim))
    }

    /// Same grid, different metric.
    pub fn with_metric(&self, metric: TorusMetric<T>) -> Result<Self> {
        Self::new(self.grid.clone(), metric)
    }

    pub fn grid(&self) -> &Arc<TorusGrid<T>> {
        &self.grid
    }

    pub fn metric(&self) -> &TorusMetric<T> {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.metric.matrix
    }

    pub fn inverse(&self) -> &DMatrix<T> {
        &self.inverse
    }

    pub fn sqrt_det(&self) -> T {
        self.sqrt_det
    }

    pub fn has_constant_metric(&self) -> bool {
        self.density.is_none()
    }

    pub fn volume(&self) -> T {
        self.volume
    }

    /// Diagonal of the Dirichlet form in the real basis.
    pub fn stiffness_symbol(&self) -> &DVector<T> {
        &self.stiffness
    }

    /// Metric density on the padded grid (`None` when `phi = 0`).
    pub fn density(&self) -> Option<&[T]> {
        self.density.as_deref()
    }

    /// Mean of the metric density (`sqrt(det G)` when `phi = 0`).
    pub fn mean_density(&self) -> T {
        self.volume
    }

    /// Dirichlet form `int g(grad u, grad v) dmu_g` applied in basis coordinates.
    pub fn stiffness(&self, c: &DVector<T>) -> DVector<T> {
        c.component_mul(&self.stiffness)
    }

    /// Flat representer of `v -> sum_x rho f v / M^d` for samples `f` on the
    /// padded grid.
    pub fn weighted_projection(&self, padded: &[T]) -> DVector<T> {
        match &self.density {
            None => self.grid.basis_from_padded(padded) * self.sqrt_det,
            Some(rho) => {
                let prod: Vec<T> = padded.iter().zip(rho).map(|(&f, &r)| f * r).collect();
                self.grid.basis_from_padded(&prod)
            }
        }
    }

    /// Mass form `int u v dmu_g` applied in basis coordinates.
    pub fn mass(&self, c: &DVector<T>) -> DVector<T> {
        match &self.density {
            None => c * self.sqrt_det,
            Some(_) => self.weighted_projection(&self.grid.padded_from_basis(c)),
        }
    }

    /// Inverse of the mass form.
    pub fn mass_solve(&self, rhs: &DVector<T>) -> Result<DVector<T>> {
        match &self.density {
            None => Ok(rhs / self.sqrt_det),
            Some(_) => {
                let inv = T::one() / self.volume;
                let (x, _) = pcg(|v| self.mass(v), |r| r * inv, rhs, T::lit(1e-13).max(T::eps() * T::lit(10.0)), 500)?;
                Ok(x)
            }
        }
    }

    /// `int u dmu_g` for basis coordinates.
    pub fn integral(&self, c: &DVector<T>) -> T {
        match &self.density {
            None => c[0] * self.sqrt_det,
            Some(rho) => {
                let p = self.grid.padded_from_basis(c);
                self.grid.padded_mean(&p.iter().zip(rho).map(|(&a, &b)| a * b).collect::<Vec<_>>())
            }
        }
    }

    /// `int f dmu_g` for samples on the padded grid.
    pub fn padded_integral(&self, padded: &[T]) -> T {
        match &self.density {
            None => self.grid.padded_mean(padded) * self.sqrt_det,
            Some(rho) => self
                .grid
                .padded_mean(&padded.iter().zip(rho).map(|(&a, &b)| a * b).collect::<Vec<_>>()),
        }
    }

    /// Basis coordinates of the constant function `1` in the mass dual: `M 1`.
    pub fn mass_of_one(&self) -> DVector<T> {
        let mut one = DVector::zeros(self.grid.basis_dim());
        one[0] = T::one();
        self.mass(&one)
    }

    /// First `count` distinct nonzero eigenvalues of `-Laplace_g`.
    ///
    /// Analytic lattice enumeration when `phi = 0`; otherwise the Galerkin
    /// eigenproblem on the mean-zero subspace of the discrete band.
    pub fn laplacian_spectrum(&self, count: usize) -> Result<Vec<SpectralLevel<T>>> {
        if count == 0 {
            return Err(Error::InvalidArgument("count must be >= 1".into()));
        }
        match &self.density {
            None => Ok(lattice_spectrum(&self.inverse, count)),
            Some(_) => self.numerical_spectrum(count),
        }
    }

    fn numerical_spectrum(&self, count: usize) -> Result<Vec<SpectralLevel<T>>> {
        let n = self.grid.basis_dim();
        // how many eigenpairs the flat comparison needs, plus slack for splitting
        let flat = lattice_spectrum(&self.inverse, count + 1);
        let wanted: usize = flat.iter().take(count).map(|l| l.multiplicity).sum::<usize>() + 4;
        if wanted + 1 > n {
            return Err(Error::InvalidArgument(format!(
                "requested {count} levels but the band only holds {n} modes"
            )));
        }
        let rel_tol = T::lit(1e-8);
        let values: Vec<T> = if n <= DENSE_LIMIT {
            let a = DMatrix::from_diagonal(&self.stiffness);
            let mut b = DMatrix::zeros(n, n);
            let mut e = DVector::zeros(n);
            for j in 0..n {
                e[j] = T::one();
                b.set_column(j, &self.mass(&e));
                e[j] = T::zero();
            }
            let b = (&b + b.transpose()) * T::lit(0.5);
            let eig = generalized_symmetric_eigen(&a, &b)?;
            eig.values.iter().skip(1).take(wanted).copied().collect()
        } else {
            let mut y = DMatrix::zeros(n, 1);
            y[(0, 0)] = T::one() / self.volume.sqrt();
            let shift = self.volume;
            let diag: DVector<T> = self.stiffness.map(|d| T::one() / (d + shift));
            let x0 = DMatrix::from_fn(n, wanted, |i, j| {
                // deterministic low-mode start
                let s = ((i * 7919 + j * 104729) % 1009) as f64 / 1009.0 - 0.5;
                T::lit(s) * diag[i]
            });
            let out = lobpcg(
                &|x: &DMatrix<T>| {
                    let mut r = x.clone();
                    for mut c in r.column_iter_mut() {
                        c.component_mul_assign(&self.stiffness);
                    }
                    r
                },
                &|x: &DMatrix<T>| {
                    let mut r = x.clone();
                    for (j, c) in x.column_iter().enumerate() {
                        r.set_column(j, &self.mass(&c.into_owned()));
                    }
                    r
                },
                &|r: &DMatrix<T>| {
                    let mut w = r.clone();
                    for mut c in w.column_iter_mut() {
                        c.component_mul_assign(&diag);
                    }
                    w
                },
                Some(&y),
                x0,
                LobpcgOptions {
                    tol: T::lit(1e-10),
                    max_iter: 2000,
                },
            );
            if !out.converged {
                return Err(Error::NoConvergence {
                    method: "LOBPCG (Laplace-Beltrami)",
                    iterations: out.iterations,
                    residuals: out.residuals.iter().map(|r| r.as_f64()).collect(),
                });
            }
            out.values.iter().copied().collect()
        };
        let mut levels = group_levels(&values, rel_tol);
        // drop a possibly truncated trailing level
        if levels.len() > count {
            levels.truncate(count);
        }
        if levels.len() < count {
            return Err(Error::InvalidArgument(format!(
                "only {} distinct levels resolved, {count} requested",
                levels.len()
            )));
        }
        Ok(levels)
    }
}

/// Distinct values of `4 pi^2 k^T G^-1 k` over nonzero integer `k`.
fn lattice_spectrum<T: Scalar>(inverse: &DMatrix<T>, count: usize) -> Vec<SpectralLevel<T>> {
    let d = inverse.nrows();
    let four_pi2 = T::lit(4.0) * T::pi() * T::pi();
    let lambda_min = inverse
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::max_value().unwrap_or(T::one()), |m, &v| m.min(v));
    let mut radius: i64 = 2;
    loop {
        let mut values = Vec::new();
        let range = -radius..=radius;
        let mut k = [0i64; 3];
        for k0 in range.clone() {
            for k1 in range.clone() {
                for k2 in if d == 3 { range.clone() } else { 0..=0 } {
                    k[0] = k0;
                    k[1] = k1;
                    k[2] = k2;
                    if k.iter().all(|&c| c == 0) {
                        continue;
                    }
                    let mut q = T::zero();
                    for a in 0..d {
                        for b in 0..d {
                            q += T::of_i64(k[a]) * inverse[(a, b)] * T::of_i64(k[b]);
                        }
                    }
                    values.push(four_pi2 * q);
                }
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let levels = group_levels(&values, T::lit(1e-10));
        let outside = four_pi2 * lambda_min * T::of_i64((radius + 1) * (radius + 1));
        if levels.len() >= count && levels[count - 1].value * (T::one() + T::lit(1e-9)) < outside {
            return levels.into_iter().take(count).collect();
        }
        radius *= 2;
    }
}
