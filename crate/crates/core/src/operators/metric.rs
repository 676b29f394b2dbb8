//! First variations of `E` and `A` in the parameters `(eps, g)`.
//!
//! A direction is `(eta, h)` with `h = e^{2 phi} (H + psi G)`: a constant
//! symmetric matrix `H` plus a conformal part `psi g` (2-tori only). The
//! matching curve of metrics is `(G + t H, phi + t psi / 2)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{check_eps, energy_apply, energy_solve};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::manifold::{Torus, TorusMetric};
use crate::potential::check_field;
use crate::scalar::Scalar;

/// `b_{g,h} = tr(G^{-1} H) G^{-1} / 2 - G^{-1} H G^{-1}`.
pub fn b_tensor<T: Scalar>(g: &DMatrix<T>, h: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !g.is_square() || g.shape() != h.shape() {
        return Err(Error::InvalidArgument("G and H must be square of equal size".into()));
    }
    let inv = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMetric("G is not positive definite".into()))?
        .inverse();
    let gih = &inv * h;
    let b = &inv * (gih.trace() * T::lit(0.5)) - &gih * &inv;
    Ok((&b + b.transpose()) * T::lit(0.5))
}

/// Parameter direction `(eta, H, psi)`.
#[derive(Clone, Debug)]
pub struct MetricDirection<T: Scalar> {
    pub eta: T,
    pub h: DMatrix<T>,
    /// Conformal part; `None` means zero.
    pub psi: Option<Field<T>>,
}

impl<T: Scalar> MetricDirection<T> {
    pub fn eps_only(dim: usize, eta: T) -> Self {
        Self {
            eta,
            h: DMatrix::zeros(dim, dim),
            psi: None,
        }
    }

    pub fn matrix(eta: T, h: DMatrix<T>) -> Self {
        Self { eta, h, psi: None }
    }

    pub fn conformal(dim: usize, psi: Field<T>) -> Self {
        Self {
            eta: T::zero(),
            h: DMatrix::zeros(dim, dim),
            psi: Some(psi),
        }
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            eta: self.eta * a,
            h: &self.h * a,
            psi: self.psi.as_ref().map(|p| p.scale(a)),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let psi = match (&self.psi, &other.psi) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a + b),
        };
        Self {
            eta: self.eta + other.eta,
            h: &self.h + &other.h,
            psi,
        }
    }

    fn validate(&self, torus: &Torus<T>) -> Result<()> {
        let d = torus.dim();
        if self.h.shape() != (d, d) {
            return Err(Error::InvalidArgument(format!("H must be {d}x{d}")));
        }
        if (&self.h - self.h.transpose()).amax() > T::lit(1e-12) * self.h.amax().max(T::one()) {
            return Err(Error::InvalidArgument("H must be symmetric".into()));
        }
        if let Some(psi) = &self.psi {
            if d != 2 {
                return Err(Error::Unsupported("conformal directions are supported on 2-tori only".into()));
            }
            check_field(torus, psi)?;
        }
        Ok(())
    }
}

/// The torus at `t` along the curve `(G + t H, phi + t psi / 2)`.
pub fn perturbed_torus<T: Scalar>(torus: &Torus<T>, dir: &MetricDirection<T>, t: T) -> Result<Torus<T>> {
    dir.validate(torus)?;
    let mut metric = TorusMetric::constant(torus.matrix() + &dir.h * t);
    let phi = match (&torus.metric().phi, &dir.psi) {
        (None, None) => None,
        (Some(p), None) => Some(p.clone()),
        (None, Some(q)) => Some(q.scale(t * T::lit(0.5))),
        (Some(p), Some(q)) => Some(p.axpy(t * T::lit(0.5), q)),
    };
    if let Some(p) = phi {
        metric = metric.with_phi(p);
    }
    torus.with_metric(metric)
}

/// Diagonal symbol of `int B(grad u, grad v) sqrt(det G) dx` for a constant
/// symmetric `B`.
fn gradient_symbol<T: Scalar>(torus: &Torus<T>, b: &DMatrix<T>) -> DVector<T> {
    let g = torus.grid();
    let d = torus.dim();
    let four_pi2 = T::lit(4.0 * PI * PI);
    DVector::from_fn(g.basis_dim(), |i, _| {
        let k = g.basis_mode(i);
        let mut q = T::zero();
        for a in 0..d {
            for c in 0..d {
                q += T::of_i64(k[a]) * b[(a, c)] * T::of_i64(k[c]);
            }
        }
        four_pi2 * q * torus.sqrt_det()
    })
}

/// Linear operator of `dE[eta, h]` in basis coordinates:
/// `2 eps eta D + eps^2 D_b + R_w`, where `w = (tr_g h / 2) rho`.
pub(crate) struct EnergyVariation<'a, T: Scalar> {
    torus: &'a Torus<T>,
    eps: T,
    eta: T,
    b_symbol: DVector<T>,
    weight: Vec<T>,
}

impl<'a, T: Scalar> EnergyVariation<'a, T> {
    pub(crate) fn new(eps: T, torus: &'a Torus<T>, dir: &MetricDirection<T>) -> Result<Self> {
        check_eps(eps)?;
        dir.validate(torus)?;
        // under the conformal factor b_{g,h} = e^{-2 phi} b_{G,H}, which the
        // density cancels; psi drops out of b in 2D
        let b = b_tensor(torus.matrix(), &dir.h)?;
        let half_trace = (torus.inverse() * &dir.h).trace() * T::lit(0.5);
        let grid = torus.grid();
        let mut weight = vec![half_trace; grid.padded_len()];
        if let Some(psi) = &dir.psi {
            for (w, p) in weight.iter_mut().zip(psi.padded()) {
                *w += p;
            }
        }
        match torus.density() {
            Some(rho) => weight.iter_mut().zip(rho).for_each(|(w, &r)| *w *= r),
            None => weight.iter_mut().for_each(|w| *w *= torus.sqrt_det()),
        }
        Ok(Self {
            torus,
            eps,
            eta: dir.eta,
            b_symbol: gradient_symbol(torus, &b),
            weight,
        })
    }

    /// `R_w c`: the mass term `int (tr_g h / 2) u v dmu_g`.
    pub(crate) fn mass_term(&self, c: &DVector<T>) -> DVector<T> {
        let grid = self.torus.grid();
        let p = grid.padded_from_basis(c);
        let prod: Vec<T> = p.iter().zip(&self.weight).map(|(&a, &w)| a * w).collect();
        grid.basis_from_padded(&prod)
    }

    pub(crate) fn apply(&self, c: &DVector<T>) -> DVector<T> {
        let two = T::lit(2.0);
        self.torus.stiffness(c) * (two * self.eps * self.eta)
            + c.component_mul(&self.b_symbol) * (self.eps * self.eps)
            + self.mass_term(c)
    }
}

/// `dE[eta, h](u, v) = 2 eps eta int g(grad u, grad v) + eps^2 int b_{g,h}(grad u, grad v)
///  + 1/2 int (tr_g h) u v`, all against `dmu_g`.
pub fn de_direction<T: Scalar>(
    eps: T,
    torus: &Torus<T>,
    dir: &MetricDirection<T>,
    u: &Field<T>,
    v: &Field<T>,
) -> Result<T> {
    check_field(torus, u)?;
    check_field(torus, v)?;
    let op = EnergyVariation::new(eps, torus, dir)?;
    Ok(u.to_basis().dot(&op.apply(&v.to_basis())))
}

/// `dA[eta, h] f`, the field with
/// `E(dA f, v) = 1/2 int (tr_g h) f v dmu_g - dE[eta, h](A f, v)` for all `v`.
pub fn da_direction<T: Scalar>(eps: T, torus: &Torus<T>, dir: &MetricDirection<T>, f: &Field<T>) -> Result<Field<T>> {
    check_field(torus, f)?;
    let op = EnergyVariation::new(eps, torus, dir)?;
    let c = f.to_basis();
    let af = energy_solve(eps, torus, &torus.mass(&c))?;
    let rhs = op.mass_term(&c) - op.apply(&af);
    Ok(Field::from_basis(torus.grid(), &energy_solve(eps, torus, &rhs)?))
}

/// `E_{eps + t eta, g(t)}(u, v)` along the curve of [`perturbed_torus`].
pub fn energy_along<T: Scalar>(
    eps: T,
    torus: &Torus<T>,
    dir: &MetricDirection<T>,
    t: T,
    u: &Field<T>,
    v: &Field<T>,
) -> Result<T> {
    let tt = perturbed_torus(torus, dir, t)?;
    let e = eps + dir.eta * t;
    Ok(u.to_basis().dot(&energy_apply(e, &tt, &v.to_basis())))
}
