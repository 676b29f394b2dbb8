//! Independent 1D oracle for striped solutions.
//!
//! Solves `-eps^2 U'' + W'(U) = lambda`, `int_0^P U = nu` on a circle of
//! period `P` by Fourier collocation (a different discretization from the
//! Galerkin torus solver). The profile is sought among even functions, which
//! removes the translation kernel; the unknowns are `U` at
//! `x_j = j P / M`, `j = 0..=M/2`, and `lambda`.

use std::f64::consts::PI;

use cahn_core::{Field, Potential, Torus};
use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, LabResult};

pub const MIN_MESH: usize = 256;

#[derive(Clone, Debug)]
pub struct Profile {
    pub eps: f64,
    pub nu: f64,
    pub period: f64,
    pub mesh: usize,
    /// Collocation points `j P / M`, `j = 0..M`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: f64,
    /// Max-norm collocation residual at exit.
    pub residual: f64,
    pub iterations: usize,
}

/// First bifurcation value `sqrt(-W''(nu/P)) P / (2 pi)`; `None` when `W''(nu/P) >= 0`.
pub fn first_criterion(pot: &Potential<f64>, nu: f64, period: f64) -> Option<f64> {
    let curvature = pot.d2w(nu / period);
    (curvature < 0.0).then(|| (-curvature).sqrt() * period / (2.0 * PI))
}

/// Second-derivative collocation matrix on `M` equispaced points of `[0, P)`.
fn second_derivative(m: usize, period: f64) -> DMatrix<f64> {
    let h = 2.0 * PI / m as f64;
    let scale = (2.0 * PI / period).powi(2);
    DMatrix::from_fn(m, m, |j, k| {
        let v = if j == k {
            -PI * PI / (3.0 * h * h) - 1.0 / 6.0
        } else {
            let diff = j as i64 - k as i64;
            let sign = if diff.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            -sign / (2.0 * (diff as f64 * h / 2.0).sin().powi(2))
        };
        v * scale
    })
}

/// Nonconstant periodic solution at `(eps, nu)`, or [`LabError::NotFound`]
/// when none bifurcates from the constant at this `eps`.
pub fn oracle_1d(pot: &Potential<f64>, eps: f64, nu: f64, period: f64, mesh: usize) -> LabResult<Profile> {
    if mesh < MIN_MESH || !mesh.is_multiple_of(2) {
        return Err(LabError::Config(format!("oracle mesh must be even and >= {MIN_MESH}, got {mesh}")));
    }
    if !(eps > 0.0 && period > 0.0) {
        return Err(LabError::Config("oracle eps and period must be positive".into()));
    }
    let c = nu / period;
    let Some(e1) = first_criterion(pot, nu, period) else {
        return Err(LabError::NotFound(format!(
            "W''({c}) >= 0: the constant is stable at every eps and no branch bifurcates"
        )));
    };
    if eps >= e1 {
        return Err(LabError::NotFound(format!("eps = {eps} is at or above the first criterion {e1}")));
    }
    let m = mesh;
    let half = m / 2;
    let full = second_derivative(m, period);
    // even reduction: column k collects points k and M - k
    let d2 = DMatrix::from_fn(half + 1, half + 1, |j, k| {
        if k == 0 || k == half {
            full[(j, k)]
        } else {
            full[(j, k)] + full[(j, m - k)]
        }
    });
    let w = |k: usize| if k == 0 || k == half { 1.0 } else { 2.0 } * period / m as f64;
    let e2 = eps * eps;
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let u = x.rows(0, half + 1);
        let lap = &d2 * u;
        let mut r = DVector::zeros(half + 2);
        for j in 0..=half {
            r[j] = -e2 * lap[j] + pot.dw(u[j]) - x[half + 1];
        }
        r[half + 1] = (0..=half).map(|k| w(k) * u[k]).sum::<f64>() - nu;
        r
    };
    let kk = 2.0 * PI / period;
    let amp = (4.0 / 3.0 * (-pot.d2w(c) - e2 * kk * kk)).max(0.0).sqrt().clamp(0.05, 1.5);
    let mut x = DVector::from_fn(half + 2, |j, _| {
        if j <= half {
            c + amp * (kk * j as f64 * period / m as f64).cos()
        } else {
            pot.dw(c)
        }
    });
    let mut r = residual(&x);
    let mut norm = r.amax();
    let mut iterations = 0;
    while norm > 1e-13 && iterations < 100 {
        iterations += 1;
        let mut jac = DMatrix::zeros(half + 2, half + 2);
        jac.view_mut((0, 0), (half + 1, half + 1)).copy_from(&(&d2 * -e2));
        for j in 0..=half {
            jac[(j, j)] += pot.d2w(x[j]);
            jac[(j, half + 1)] = -1.0;
            jac[(half + 1, j)] = w(j);
        }
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| LabError::NotFound("singular collocation Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let trial = &x + &step * t;
            let rt = residual(&trial);
            if rt.amax() < norm || t < 1e-6 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
        let previous = norm;
        norm = r.amax();
        if norm >= previous && norm > 1e-10 {
            break;
        }
    }
    if norm > 1e-10 {
        return Err(LabError::NotFound(format!(
            "collocation Newton stalled at residual {norm:e} after {iterations} iterations"
        )));
    }
    let mut u = vec![0.0; m];
    for j in 0..m {
        u[j] = x[if j <= half { j } else { m - j }];
    }
    let spread = u.iter().fold(0.0f64, |s, v| s.max((v - c).abs()));
    if spread < 1e-6 {
        return Err(LabError::NotFound(format!("Newton returned the constant solution at eps = {eps}")));
    }
    Ok(Profile {
        eps,
        nu,
        period,
        mesh,
        x: (0..m).map(|j| j as f64 * period / m as f64).collect(),
        u,
        lambda: x[half + 1],
        residual: norm,
        iterations,
    })
}

impl Profile {
    /// Cosine coefficients `a_k` with `U(s) = sum_k a_k cos(2 pi k s / P)`.
    pub fn cosine_coefficients(&self) -> Vec<f64> {
        let m = self.mesh;
        let half = m / 2;
        (0..=half)
            .map(|k| {
                let s: f64 = self
                    .u
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (2.0 * PI * (k * j) as f64 / m as f64).cos())
                    .sum();
                if k == 0 || k == half {
                    s / m as f64
                } else {
                    2.0 * s / m as f64
                }
            })
            .collect()
    }

    /// Trigonometric interpolant of the profile at `s`.
    pub fn evaluate(&self, coeffs: &[f64], s: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * (2.0 * PI * k as f64 * s / self.period).cos())
            .sum()
    }

    /// `max_j |U(x_j + P/2) + U(x_j) - 2 nu / P|`: zero for profiles odd about the mean.
    pub fn odd_symmetry_error(&self) -> f64 {
        let m = self.mesh;
        let c = self.nu / self.period;
        (0..m)
            .map(|j| (self.u[(j + m / 2) % m] + self.u[j] - 2.0 * c).abs())
            .fold(0.0, f64::max)
    }
}

/// Parameters of the 1D problem solved by stripes `u(x) = U(k . x)` on a torus
/// with constant metric `G`: `(eps |k|_{G^{-1}}, nu / sqrt(det G))` on period 1.
pub fn stripe_reduction(torus: &Torus<f64>, k: [i64; 3], eps: f64, nu: f64) -> (f64, f64) {
    let d = torus.dim();
    let kv = DVector::from_fn(d, |i, _| k[i] as f64);
    let norm2 = kv.dot(&(torus.inverse() * &kv));
    (eps * norm2.sqrt(), nu / torus.sqrt_det())
}

/// The stripe `U(k . x)` on the torus grid.
pub fn extend(profile: &Profile, torus: &Torus<f64>, k: [i64; 3]) -> Field<f64> {
    let coeffs = profile.cosine_coefficients();
    let d = torus.dim();
    Field::from_fn(torus.grid(), |x| {
        let s: f64 = (0..d).map(|i| k[i] as f64 * x[i]).sum();
        profile.evaluate(&coeffs, s.rem_euclid(1.0) * profile.period)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw() -> Potential<f64> {
        Potential::double_well()
    }

    #[test]
    fn above_the_first_criterion_is_not_found() {
        let e1 = 1.0 / (2.0 * PI);
        assert!(matches!(oracle_1d(&dw(), e1, 0.0, 1.0, 256), Err(LabError::NotFound(_))));
        assert!(matches!(oracle_1d(&dw(), 1.2 * e1, 0.0, 1.0, 256), Err(LabError::NotFound(_))));
        // W''(1) = 2 > 0
        assert!(matches!(oracle_1d(&dw(), 0.05, 1.0, 1.0, 256), Err(LabError::NotFound(_))));
        assert!(matches!(oracle_1d(&dw(), 0.1, 0.0, 1.0, 128), Err(LabError::Config(_))));
    }

    #[test]
    fn profile_below_the_criterion_is_odd_and_converged() {
        let e1 = 1.0 / (2.0 * PI);
        let p = oracle_1d(&dw(), 0.9 * e1, 0.0, 1.0, 256).unwrap();
        assert!(p.odd_symmetry_error() < 1e-12);
        assert!(p.lambda.abs() < 1e-12);
        let q = oracle_1d(&dw(), 0.9 * e1, 0.0, 1.0, 512).unwrap();
        assert!((p.lambda - q.lambda).abs() <= 1e-8);
        let mass: f64 = p.u.iter().sum::<f64>() / p.mesh as f64;
        assert!(mass.abs() < 1e-13);
    }

    #[test]
    fn small_amplitude_matches_weakly_nonlinear_theory() {
        // just below the criterion the profile is ~ A cos(2 pi x) with A^2 = 4 (1 - (eps/e1)^2) / 3
        let e1 = 1.0 / (2.0 * PI);
        let eps = 0.999 * e1;
        let p = oracle_1d(&dw(), eps, 0.0, 1.0, 256).unwrap();
        let a = p.cosine_coefficients()[1];
        let predicted = (4.0 / 3.0 * (1.0 - 0.999f64.powi(2))).sqrt();
        assert!((a.abs() - predicted).abs() < 0.02 * predicted, "{a} vs {predicted}");
    }

    #[test]
    fn cosine_interpolant_reproduces_nodes() {
        let p = oracle_1d(&dw(), 0.1, 0.1, 1.0, 256).unwrap();
        let c = p.cosine_coefficients();
        for j in [0, 17, 128, 200] {
            assert!((p.evaluate(&c, p.x[j]) - p.u[j]).abs() < 1e-12);
        }
    }
}
