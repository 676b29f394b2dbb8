//! Hilbert structure and operator calculus: the `H_g` and `E_{eps,g}` forms,
//! the solution operator `A`, the map `F` and its derivative, and the
//! functional `J`.
//!
//! All arithmetic happens in the real flat-orthonormal basis of the fixed
//! discrete band; metric dependence enters only through the form matrices.
//! With `R` the weighted projection of padded samples (so that `R(v) = M v`
//! for band-limited `v`), the composition `A B_W` is `E^{-1} R(lambda + u - W'(u))`,
//! which makes `F` the `E`-gradient of `J` exactly.

mod metric;

use nalgebra::{DMatrix, DVector};

pub use metric::{b_tensor, da_direction, de_direction, energy_along, perturbed_torus, MetricDirection};

use crate::error::{Error, Result};
use crate::field::{AugmentedVector, Field};
use crate::linalg::pcg;
use crate::manifold::Torus;
use crate::potential::{check_field, nemytskii_db, Potential};
use crate::scalar::Scalar;

fn check_eps<T: Scalar>(eps: T) -> Result<()> {
    if eps > T::zero() && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")))
    }
}

/// Relative residual used by every iterative `E` solve.
pub(crate) fn solve_rtol<T: Scalar>() -> T {
    T::lit(1e-13).max(T::eps() * T::lit(50.0))
}

/// `int g(grad u, grad v) + u v dmu_g`.
pub fn inner_h<T: Scalar>(torus: &Torus<T>, u: &Field<T>, v: &Field<T>) -> Result<T> {
    energy_e(T::one(), torus, u, v)
}

/// `E_{eps,g}(u, v) = int eps^2 g(grad u, grad v) + u v dmu_g`.
pub fn energy_e<T: Scalar>(eps: T, torus: &Torus<T>, u: &Field<T>, v: &Field<T>) -> Result<T> {
    check_eps(eps)?;
    check_field(torus, u)?;
    check_field(torus, v)?;
    Ok(u.to_basis().dot(&energy_apply(eps, torus, &v.to_basis())))
}

/// `E c` in basis coordinates.
pub(crate) fn energy_apply<T: Scalar>(eps: T, torus: &Torus<T>, c: &DVector<T>) -> DVector<T> {
    torus.stiffness(c) * (eps * eps) + torus.mass(c)
}

/// `E^{-1} r`: diagonal when `phi = 0`, preconditioned CG otherwise.
pub(crate) fn energy_solve<T: Scalar>(eps: T, torus: &Torus<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    let e2 = eps * eps;
    let sym = torus.stiffness_symbol();
    if torus.has_constant_metric() {
        let s = torus.sqrt_det();
        return Ok(DVector::from_fn(rhs.len(), |i, _| rhs[i] / (e2 * sym[i] + s)));
    }
    let vol = torus.volume();
    let (x, _) = pcg(
        |c| energy_apply(eps, torus, c),
        |r| DVector::from_fn(r.len(), |i, _| r[i] / (e2 * sym[i] + vol)),
        rhs,
        solve_rtol(),
        2000,
    )?;
    Ok(x)
}

/// `A_{eps,g} f`: the field `w` with `E(w, v) = int f v dmu_g` for every
/// discrete `v`.
pub fn apply_a<T: Scalar>(eps: T, torus: &Torus<T>, f: &Field<T>) -> Result<Field<T>> {
    check_eps(eps)?;
    check_field(torus, f)?;
    let w = energy_solve(eps, torus, &torus.mass(&f.to_basis()))?;
    Ok(Field::from_basis(torus.grid(), &w))
}

/// `int u dmu_g`.
pub fn integral<T: Scalar>(torus: &Torus<T>, u: &Field<T>) -> Result<T> {
    check_field(torus, u)?;
    Ok(torus.integral(&u.to_basis()))
}

/// Everything that fixes the map `F_W(eps, g, ., .)`.
#[derive(Clone, Debug)]
pub struct Problem<T: Scalar> {
    pub eps: T,
    pub torus: Torus<T>,
    pub potential: Potential<T>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(eps: T, torus: Torus<T>, potential: Potential<T>) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self { eps, torus, potential })
    }

    pub fn with_eps(&self, eps: T) -> Result<Self> {
        Self::new(eps, self.torus.clone(), self.potential.clone())
    }

    pub fn dim(&self) -> usize {
        self.torus.grid().basis_dim()
    }

    fn padded(&self, c: &DVector<T>) -> Vec<T> {
        self.torus.grid().padded_from_basis(c)
    }

    /// Weak residual functional `eps^2 D u + R(W'(u)) - lambda M 1`, i.e. the
    /// `u`-gradient of `J` in the flat dual.
    pub(crate) fn weak_residual(&self, u: &DVector<T>, lambda: T) -> DVector<T> {
        let pu = self.padded(u);
        let w: Vec<T> = pu.iter().map(|&x| self.potential.dw(x)).collect();
        self.torus.stiffness(u) * (self.eps * self.eps) + self.torus.weighted_projection(&w)
            - self.torus.mass_of_one() * lambda
    }

    /// `F_W(u, lambda)` in coordinates, stacked as `[field; scalar]`.
    pub(crate) fn f_coords(&self, u: &DVector<T>, lambda: T) -> Result<DVector<T>> {
        let r = energy_solve(self.eps, &self.torus, &self.weak_residual(u, lambda))?;
        Ok(stack(&r, self.torus.integral(u)))
    }

    /// `(u - A B_W(u, lambda), int u dmu_g)`.
    pub fn f_map(&self, u: &Field<T>, lambda: T) -> Result<(Field<T>, T)> {
        check_field(&self.torus, u)?;
        let out = self.f_coords(&u.to_basis(), lambda)?;
        let a = AugmentedVector::from_vector(self.torus.grid(), &out);
        Ok((a.field, a.scalar))
    }

    /// Samples of `W''(u)` on the padded grid.
    pub(crate) fn curvature(&self, u: &DVector<T>) -> Vec<T> {
        self.padded(u).iter().map(|&x| self.potential.d2w(x)).collect()
    }

    /// Symmetric augmented operator
    /// `S(v, Lambda) = (eps^2 D v + R(W''(u) v) - Lambda M 1, -(M 1) . v)`,
    /// which is the Hessian of `J` at `(u, lambda)`.
    pub(crate) fn hessian_coords(&self, curvature: &[T], x: &DVector<T>) -> DVector<T> {
        let n = self.dim();
        let v = x.rows(0, n).into_owned();
        let big = x[n];
        let pv = self.padded(&v);
        let prod: Vec<T> = pv.iter().zip(curvature).map(|(&a, &b)| a * b).collect();
        let m1 = self.torus.mass_of_one();
        let top = self.torus.stiffness(&v) * (self.eps * self.eps) + self.torus.weighted_projection(&prod) - &m1 * big;
        stack(&top, -m1.dot(&v))
    }

    /// `dF` at `u` applied to `x = [v; Lambda]`; equals `diag(E^{-1}, -1) S x`.
    pub(crate) fn df_coords(&self, curvature: &[T], x: &DVector<T>) -> Result<DVector<T>> {
        let n = self.dim();
        let s = self.hessian_coords(curvature, x);
        let top = energy_solve(self.eps, &self.torus, &s.rows(0, n).into_owned())?;
        Ok(stack(&top, -s[n]))
    }

    /// `(v - A dB_W[v, Lambda], int v dmu_g)`.
    pub fn df_map(&self, u: &Field<T>, lambda: T, v: &Field<T>, big_lambda: T) -> Result<(Field<T>, T)> {
        let _ = lambda; // dF does not depend on lambda
        check_field(&self.torus, u)?;
        check_field(&self.torus, v)?;
        let x = stack(&v.to_basis(), big_lambda);
        let out = self.df_coords(&self.curvature(&u.to_basis()), &x)?;
        let a = AugmentedVector::from_vector(self.torus.grid(), &out);
        Ok((a.field, a.scalar))
    }

    /// Same map as [`Problem::df_map`] assembled literally from the
    /// Nemytskii derivative and `A`; used to cross-check the fast path.
    pub fn df_map_composed(&self, u: &Field<T>, v: &Field<T>, big_lambda: T) -> Result<(Field<T>, T)> {
        let db = nemytskii_db(&self.torus, &self.potential, u, v, big_lambda)?;
        let adb = apply_a(self.eps, &self.torus, &db)?;
        Ok((v - &adb, integral(&self.torus, v)?))
    }

    /// `J(u, lambda) = int eps^2/2 |grad u|^2 + W(u) - lambda u dmu_g + lambda nu`.
    pub fn j_value(&self, u: &Field<T>, lambda: T, nu: T) -> Result<T> {
        check_field(&self.torus, u)?;
        let c = u.to_basis();
        let pu = self.padded(&c);
        let w: Vec<T> = pu.iter().map(|&x| self.potential.w(x)).collect();
        let dirichlet = c.dot(&self.torus.stiffness(&c)) * (self.eps * self.eps) * T::lit(0.5);
        Ok(dirichlet + self.torus.padded_integral(&w) - lambda * self.torus.integral(&c) + lambda * nu)
    }

    /// Gradient of `J`: the `E`-Riesz representer of `dJ/du` (which is the
    /// field part of `F`) and `dJ/dlambda = nu - int u dmu_g`.
    pub fn j_gradient(&self, u: &Field<T>, lambda: T, nu: T) -> Result<AugmentedVector<T>> {
        let (field, mass) = self.f_map(u, lambda)?;
        Ok(AugmentedVector::new(field, nu - mass))
    }

    /// Strong-form residual `|| -eps^2 Lap_g u + W'(u) - lambda ||_{L^2}` of the
    /// discrete equation, with the `L^2` norm of the metric.
    pub fn strong_residual(&self, u: &Field<T>, lambda: T) -> Result<T> {
        check_field(&self.torus, u)?;
        let r = self.weak_residual(&u.to_basis(), lambda);
        let strong = self.torus.mass_solve(&r)?;
        Ok(strong.dot(&self.torus.mass(&strong)).max(T::zero()).sqrt())
    }

    /// Norm of `F(u, lambda) - (0, nu)` in the primed inner product.
    pub fn level_set_residual(&self, u: &Field<T>, lambda: T, nu: T) -> Result<T> {
        let f = self.f_coords(&u.to_basis(), lambda)?;
        Ok(self.primed_norm(&f, nu))
    }

    /// `sqrt(E(f, f) + (t - nu)^2)` for `x = [f; t]`.
    pub(crate) fn primed_norm(&self, x: &DVector<T>, nu: T) -> T {
        let n = self.dim();
        let f = x.rows(0, n).into_owned();
        let e = f.dot(&energy_apply(self.eps, &self.torus, &f));
        let t = x[n] - nu;
        (e.max(T::zero()) + t * t).sqrt()
    }

    /// Primed inner product `E(u1, u2) + t1 t2` in coordinates.
    pub(crate) fn primed_apply(&self, x: &DVector<T>) -> DVector<T> {
        let n = self.dim();
        let e = energy_apply(self.eps, &self.torus, &x.rows(0, n).into_owned());
        stack(&e, x[n])
    }

    /// Dense `S` at the given `W''(u)` samples.
    pub(crate) fn hessian_matrix(&self, curvature: &[T]) -> DMatrix<T> {
        dense_from(self.dim() + 1, |x| self.hessian_coords(curvature, x))
    }

    /// Dense primed Gram matrix `diag(E, 1)`.
    pub(crate) fn primed_matrix(&self) -> DMatrix<T> {
        dense_from(self.dim() + 1, |x| self.primed_apply(x))
    }

    /// Diagonal of `diag(E, 1)` (exact for `phi = 0`, a spectrally
    /// equivalent surrogate otherwise).
    pub(crate) fn primed_diagonal(&self) -> DVector<T> {
        let n = self.dim();
        let sym = self.torus.stiffness_symbol();
        let m = self.torus.mean_density();
        let e2 = self.eps * self.eps;
        DVector::from_fn(n + 1, |i, _| if i < n { e2 * sym[i] + m } else { T::one() })
    }

    /// Inverse of [`Problem::primed_apply`].
    pub(crate) fn primed_solve(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let n = self.dim();
        let e = energy_solve(self.eps, &self.torus, &x.rows(0, n).into_owned())?;
        Ok(stack(&e, x[n]))
    }
}

/// Columns `op(e_j)`, symmetrized.
pub(crate) fn dense_from<T: Scalar>(n: usize, op: impl Fn(&DVector<T>) -> DVector<T>) -> DMatrix<T> {
    let mut m = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = T::one();
        m.set_column(j, &op(&e));
        e[j] = T::zero();
    }
    (&m + m.transpose()) * T::lit(0.5)
}

pub(crate) fn stack<T: Scalar>(top: &DVector<T>, last: T) -> DVector<T> {
    let n = top.len();
    DVector::from_fn(n + 1, |i, _| if i < n { top[i] } else { last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Mode;
    use crate::manifold::TorusMetric;
    use crate::potential::nemytskii_b;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flat() -> Torus<f64> {
        Torus::flat(2, 16).unwrap()
    }

    fn conformal() -> Torus<f64> {
        let t = flat();
        let phi = Field::from_modes(t.grid(), &[Mode::cos([1, 0, 0], 0.1), Mode::cos([1, 2, 0], 0.05)]).unwrap();
        t.with_metric(TorusMetric::constant(DMatrix::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 0.9])).with_phi(phi))
            .unwrap()
    }

    fn random_field(t: &Torus<f64>, rng: &mut ChaCha8Rng, kmax: i64) -> Field<f64> {
        let g = t.grid();
        let b = DVector::from_fn(g.basis_dim(), |i, _| {
            let k = g.basis_mode(i);
            if k.iter().all(|c| c.abs() <= kmax) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        Field::from_basis(g, &b)
    }

    fn cos1(t: &Torus<f64>) -> Field<f64> {
        Field::from_fn(t.grid(), |x| (2.0 * PI * x[0]).cos())
    }

    #[test]
    fn inner_and_energy_examples() {
        let t = flat();
        let one = Field::constant(t.grid(), 1.0);
        assert!((inner_h(&t, &one, &one).unwrap() - 1.0).abs() < 1e-14);
        let c = cos1(&t);
        assert!((inner_h(&t, &c, &c).unwrap() - (2.0 * PI * PI + 0.5)).abs() < 1e-12);
        assert!((energy_e(0.5, &t, &c, &c).unwrap() - (PI * PI / 2.0 + 0.5)).abs() < 1e-12);
        assert!(energy_e(0.0, &t, &c, &c).is_err());
    }

    #[test]
    fn apply_a_examples() {
        let t = flat();
        let c = Field::constant(t.grid(), 0.7);
        let a = apply_a(0.3, &t, &c).unwrap();
        assert!((&a - &c).max_abs() < 1e-15);
        let f = cos1(&t);
        let a = apply_a(1.0, &t, &f).unwrap();
        assert!((&a - &f.scale(1.0 / (1.0 + 4.0 * PI * PI))).max_abs() < 1e-15);
    }

    /// Second-order finite-difference Helmholtz inverse on the collocation
    /// grid; agrees with the spectral multiplier up to O(h^2).
    #[test]
    fn apply_a_matches_finite_difference_inverse() {
        let t = flat();
        let g = t.grid();
        let n = g.n();
        let h = 1.0 / n as f64;
        let len = n * n;
        let mut m = DMatrix::<f64>::zeros(len, len);
        for i in 0..n {
            for j in 0..n {
                let r = i * n + j;
                m[(r, r)] = 1.0 + 4.0 / (h * h);
                for (di, dj) in [(1, 0), (n - 1, 0), (0, 1), (0, n - 1)] {
                    m[(r, ((i + di) % n) * n + (j + dj) % n)] -= 1.0 / (h * h);
                }
            }
        }
        let f = cos1(&t);
        let fd = m.lu().solve(&DVector::from_column_slice(f.values())).unwrap();
        let a = apply_a(1.0, &t, &f).unwrap();
        // exact FD eigenvalue for the k = 1 mode
        let lam = 1.0 + 4.0 * (PI * h).sin().powi(2) / (h * h);
        for (x, y) in fd.iter().zip(f.values()) {
            assert!((x - y / lam).abs() < 1e-12);
        }
        let rel = (fd.iter().zip(a.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sqrt()
            / a.values().iter().map(|y| y * y).sum::<f64>().sqrt();
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn adjoint_identity_spectral_and_iterative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (t, tol) in [(flat(), 1e-11), (conformal(), 1e-9)] {
            for _ in 0..10 {
                let f = random_field(&t, &mut rng, 7);
                let v = random_field(&t, &mut rng, 7);
                let eps = rng.random_range(0.05..1.0);
                let af = apply_a(eps, &t, &f).unwrap();
                let lhs = energy_e(eps, &t, &af, &v).unwrap();
                let rhs = t.integral(&t.grid().basis_from_padded(
                    &f.padded().iter().zip(v.padded()).map(|(a, b)| a * b).collect::<Vec<_>>(),
                ));
                let rhs2 = f.to_basis().dot(&t.mass(&v.to_basis()));
                assert!((lhs - rhs2).abs() <= tol * f.l2_norm() * v.l2_norm());
                if t.has_constant_metric() {
                    assert!((rhs - rhs2).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_map_examples() {
        let t = flat();
        let p = Problem::new(0.3, t.clone(), Potential::double_well()).unwrap();
        let g = t.grid();
        let (f, m) = p.f_map(&Field::zeros(g), 0.0).unwrap();
        assert!(f.max_abs() < 1e-15 && m == 0.0);
        let c = 0.4;
        let (f, m) = p.f_map(&Field::constant(g, c), 0.25).unwrap();
        let expect = c * c * c - c - 0.25;
        assert!(f.values().iter().all(|x| (x - expect).abs() < 1e-14));
        assert!((m - c).abs() < 1e-15);
        let (f, m) = p.f_map(&Field::constant(g, 0.2), 0.2f64.powi(3) - 0.2).unwrap();
        assert!(f.max_abs() < 1e-15 && (m - 0.2).abs() < 1e-15);
    }

    #[test]
    fn f_map_is_literal_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [flat(), conformal()] {
            let p = Problem::new(0.2, t.clone(), Potential::double_well()).unwrap();
            let u = random_field(&t, &mut rng, 4);
            let lambda = 0.3;
            let (f, _) = p.f_map(&u, lambda).unwrap();
            let b = nemytskii_b(&t, &p.potential, &u, lambda).unwrap();
            let lit = &u - &apply_a(p.eps, &t, &b).unwrap();
            assert!((&f - &lit).max_abs() < 1e-10);
            let v = random_field(&t, &mut rng, 4);
            let (d, s) = p.df_map(&u, lambda, &v, 0.6).unwrap();
            let (d2, s2) = p.df_map_composed(&u, &v, 0.6).unwrap();
            assert!((&d - &d2).max_abs() < 1e-10 && (s - s2).abs() < 1e-12);
        }
    }

    #[test]
    fn df_map_examples_and_finite_differences() {
        let t = flat();
        let p = Problem::new(0.3, t.clone(), Potential::double_well()).unwrap();
        let g = t.grid();
        let (f, s) = p.df_map(&Field::zeros(g), 0.0, &Field::zeros(g), 1.0).unwrap();
        assert!(f.values().iter().all(|x| (x + 1.0).abs() < 1e-15) && s == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in [flat(), conformal()] {
            let p = Problem::new(0.25, t.clone(), Potential::double_well()).unwrap();
            let u = random_field(&t, &mut rng, 5);
            let v = random_field(&t, &mut rng, 5);
            let (lam, big) = (0.1, 0.7);
            let h = 1e-4;
            let (fp, sp) = p.f_map(&u.axpy(h, &v), lam + h * big).unwrap();
            let (fm, sm) = p.f_map(&u.axpy(-h, &v), lam - h * big).unwrap();
            let fd = (&fp - &fm).scale(0.5 / h);
            let (d, s) = p.df_map(&u, lam, &v, big).unwrap();
            assert!((&fd - &d).l2_norm() <= 1e-6 * d.l2_norm());
            assert!(((sp - sm) / (2.0 * h) - s).abs() <= 1e-9);
        }
    }

    #[test]
    fn j_examples_and_gradient() {
        let t = flat();
        let p = Problem::new(0.3, t.clone(), Potential::double_well()).unwrap();
        let g = t.grid();
        assert!((p.j_value(&Field::zeros(g), 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
        let nu = 0.2;
        let grad = p.j_gradient(&Field::constant(g, nu), nu.powi(3) - nu, nu).unwrap();
        assert!(grad.field.max_abs() < 1e-15 && grad.scalar.abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [flat(), conformal()] {
            let p = Problem::new(0.2, t.clone(), Potential::double_well()).unwrap();
            let u = random_field(&t, &mut rng, 5);
            let v = random_field(&t, &mut rng, 5);
            let (lam, big, nu) = (0.2, -0.4, 0.3);
            let h = 1e-4;
            let jp = p.j_value(&u.axpy(h, &v), lam + h * big, nu).unwrap();
            let jm = p.j_value(&u.axpy(-h, &v), lam - h * big, nu).unwrap();
            let fd = (jp - jm) / (2.0 * h);
            let grad = p.j_gradient(&u, lam, nu).unwrap();
            let exact = energy_e(p.eps, &t, &grad.field, &v).unwrap() + grad.scalar * big;
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} {exact}");
        }
    }
}
