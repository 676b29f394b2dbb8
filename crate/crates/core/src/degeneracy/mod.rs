//! Nondegeneracy analysis through the linearized problem
//! `-eps^2 Lap_g v + W''(u) v = Lambda`, `int v dmu_g = 0`.
//!
//! Singular values of `dF` are measured with the primed inner product
//! `<(u1, t1), (u2, t2)>' = E(u1, u2) + t1 t2`. Since `dF = P^{-1} J S`
//! with `P = diag(E, 1)`, `J = diag(1, -1)` and `S` the symmetric Hessian of
//! `J`, they are the moduli of the eigenvalues of the pencil `S x = mu P x`.

mod cokernel;
mod constant;

use nalgebra::{DMatrix, DVector};

pub use cokernel::{cokernel_check, hessian_correspondence, CokernelReport, CorrespondenceReport};
pub use constant::{constant_field, constant_solution, degenerate_epsilons, morse_lower_bound};

use crate::error::{Error, Result};
use crate::field::{AugmentedVector, Field};
use crate::linalg::{generalized_symmetric_eigen, lobpcg, LobpcgOptions};
use crate::manifold::{Manifold, DENSE_LIMIT};
use crate::operators::{stack, Problem};
use crate::potential::check_field;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Nondegenerate,
    /// Kernel dimension.
    Degenerate(usize),
}

impl Classification {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Classification::Degenerate(_))
    }

    pub fn label(&self) -> String {
        match self {
            Classification::Nondegenerate => "nondegenerate".into(),
            Classification::Degenerate(k) => format!("degenerate({k})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct DegeneracyOptions<T> {
    /// Degeneracy threshold relative to the largest singular value.
    pub tau: T,
    /// Augmented dimension up to which dense factorizations are used.
    pub dense_limit: usize,
    /// Number of smallest singular values computed on the iterative path.
    pub count: usize,
}

impl<T: Scalar> Default for DegeneracyOptions<T> {
    fn default() -> Self {
        Self {
            tau: T::lit(1e-8),
            dense_limit: DENSE_LIMIT,
            count: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DegeneracyReport<T: Scalar> {
    pub sigma_min: T,
    pub sigma_max: T,
    /// Smallest singular values, ascending (all of them on the dense path).
    pub singular_values: Vec<T>,
    /// Signed pencil eigenvalues matching `singular_values`.
    pub signed: Vec<T>,
    /// Primed-orthonormal kernel basis.
    pub kernel: Vec<AugmentedVector<T>>,
    pub classification: Classification,
    /// Some singular value lies in `[tau, 10 tau] * sigma_max`.
    pub marginal: bool,
    pub tau: T,
    /// Largest linearized-problem residual over the kernel basis.
    pub kernel_residual: T,
    /// Predicted degenerate `eps` for constant solutions.
    pub predicted_eps: Option<Vec<(T, usize)>>,
    pub method: Method,
}

impl<T: Scalar> DegeneracyReport<T> {
    pub fn relative_sigma_min(&self) -> T {
        self.sigma_min / self.sigma_max
    }
}

/// `(-eps^2 Lap_g v + W''(u) v - Lambda, int v dmu_g)` in the discrete weak
/// sense.
pub fn linearized_apply<T: Scalar>(problem: &Problem<T>, u: &Field<T>, v: &Field<T>, big_lambda: T) -> Result<(Field<T>, T)> {
    check_field(&problem.torus, u)?;
    check_field(&problem.torus, v)?;
    let curvature = problem.curvature(&u.to_basis());
    let x = stack(&v.to_basis(), big_lambda);
    let (field, t) = linearized_coords(problem, &curvature, &x)?;
    Ok((Field::from_basis(problem.torus.grid(), &field), t))
}

pub(crate) fn linearized_coords<T: Scalar>(
    problem: &Problem<T>,
    curvature: &[T],
    x: &DVector<T>,
) -> Result<(DVector<T>, T)> {
    let n = problem.dim();
    let s = problem.hessian_coords(curvature, x);
    let field = problem.torus.mass_solve(&s.rows(0, n).into_owned())?;
    Ok((field, -s[n]))
}

/// `L^2` norm plus constraint violation of the linearized residual.
pub(crate) fn linearized_norm<T: Scalar>(problem: &Problem<T>, curvature: &[T], x: &DVector<T>) -> Result<T> {
    let (f, t) = linearized_coords(problem, curvature, x)?;
    let l2 = f.dot(&problem.torus.mass(&f)).max(T::zero()).sqrt();
    Ok(l2 + t.abs())
}

/// Eigen-decomposition of the pencil `S x = mu P x`: values ascending,
/// primed-orthonormal vectors.
fn dense_pencil<T: Scalar>(problem: &Problem<T>, curvature: &[T]) -> Result<(DVector<T>, DMatrix<T>)> {
    let s = problem.hessian_matrix(curvature);
    let p = problem.primed_matrix();
    let eig = generalized_symmetric_eigen(&s, &p)?;
    Ok((eig.values, eig.vectors))
}

/// Deterministic, well-spread starting block.
fn start_block<T: Scalar>(rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |i, j| {
        let x = (1.0 + 12.9898 * i as f64 + 78.233 * j as f64).sin() * 43758.5453;
        T::lit(x - x.floor() - 0.5)
    })
}

fn map_columns<T: Scalar>(x: &DMatrix<T>, op: impl Fn(&DVector<T>) -> Result<DVector<T>>) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        out.set_column(j, &op(&x.column(j).into_owned())?);
    }
    Ok(out)
}

/// Smallest `count` eigenpairs of `S x = mu P x` in modulus, via LOBPCG on
/// `S P^{-1} S` with metric `P`, followed by a Rayleigh-Ritz on `S` for the signs.
fn iterative_pencil<T: Scalar>(
    problem: &Problem<T>,
    curvature: &[T],
    count: usize,
) -> Result<(DVector<T>, DMatrix<T>, T)> {
    let dim = problem.dim() + 1;
    let err = std::cell::RefCell::new(None);
    let guard = |r: Result<DVector<T>>, n: usize| match r {
        Ok(v) => v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            DVector::zeros(n)
        }
    };
    let a = |x: &DMatrix<T>| {
        map_columns(x, |c| {
            let s = problem.hessian_coords(curvature, c);
            let y = problem.primed_solve(&s)?;
            Ok(problem.hessian_coords(curvature, &y))
        })
        .unwrap_or_else(|e| {
            err.borrow_mut().get_or_insert(e);
            DMatrix::zeros(x.nrows(), x.ncols())
        })
    };
    let b = |x: &DMatrix<T>| map_columns(x, |c| Ok(problem.primed_apply(c))).expect("infallible");
    let precond = |x: &DMatrix<T>| {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            let c = x.column(j).into_owned();
            out.set_column(j, &guard(problem.primed_solve(&c), c.len()));
        }
        out
    };
    let block = (count + 4).min(dim);
    let out = lobpcg(
        &a,
        &b,
        &precond,
        None,
        start_block(dim, block),
        LobpcgOptions {
            tol: T::lit(1e-10).max(T::eps().sqrt() * T::lit(1e-2)),
            max_iter: 500,
        },
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    if !out.converged {
        return Err(Error::NoConvergence {
            method: "LOBPCG on the normal pencil",
            iterations: out.iterations,
            residuals: out.residuals.iter().map(|r| r.as_f64()).collect(),
        });
    }
    // signed values from S on the converged, P-orthonormal block
    let x = out.vectors;
    let sx = map_columns(&x, |c| Ok(problem.hessian_coords(curvature, c)))?;
    let px = b(&x);
    let eig = generalized_symmetric_eigen(&(x.transpose() * &sx), &(x.transpose() * &px))?;
    let vectors = &x * &eig.vectors;
    // largest |mu| by power iteration on P^{-1} S
    let mut v = start_block::<T>(dim, 1).column(0).into_owned();
    let mut top = T::zero();
    for _ in 0..60 {
        let norm = v.dot(&problem.primed_apply(&v)).sqrt();
        v /= norm;
        let w = problem.primed_solve(&problem.hessian_coords(curvature, &v))?;
        top = w.dot(&problem.primed_apply(&w)).sqrt();
        v = w;
    }
    Ok((eig.values, vectors, top))
}

/// Smallest singular value of `dF` at `u` in the primed inner product, with
/// the numerical kernel and a classification against `tau * sigma_max`.
pub fn min_singular<T: Scalar>(problem: &Problem<T>, u: &Field<T>, opts: &DegeneracyOptions<T>) -> Result<DegeneracyReport<T>> {
    check_field(&problem.torus, u)?;
    let curvature = problem.curvature(&u.to_basis());
    let dim = problem.dim() + 1;
    let (values, vectors, sigma_max, method) = if dim <= opts.dense_limit {
        let (values, vectors) = dense_pencil(problem, &curvature)?;
        let top = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        (values, vectors, top, Method::Dense)
    } else {
        let (values, vectors, top) = iterative_pencil(problem, &curvature, opts.count)?;
        (values, vectors, top, Method::Iterative)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .abs()
            .partial_cmp(&values[j].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let singular_values: Vec<T> = order.iter().map(|&i| values[i].abs()).collect();
    let signed: Vec<T> = order.iter().map(|&i| values[i]).collect();
    let cut = opts.tau * sigma_max;
    let grid = problem.torus.grid();
    let mut kernel = Vec::new();
    let mut kernel_residual = T::zero();
    for &i in order.iter().filter(|&&i| values[i].abs() <= cut) {
        let x = vectors.column(i).into_owned();
        kernel_residual = kernel_residual.max(linearized_norm(problem, &curvature, &x)?);
        kernel.push(AugmentedVector::from_vector(grid, &x));
    }
    let marginal = singular_values.iter().any(|&s| s > cut && s <= cut * T::lit(10.0));
    let classification = if kernel.is_empty() {
        Classification::Nondegenerate
    } else {
        Classification::Degenerate(kernel.len())
    };
    Ok(DegeneracyReport {
        sigma_min: singular_values[0],
        sigma_max,
        singular_values,
        signed,
        kernel,
        classification,
        marginal,
        tau: opts.tau,
        kernel_residual,
        predicted_eps: constant_prediction(problem, u)?,
        method,
    })
}

/// Primed-metric angle between `v` and the span of `kernel`, which must be
/// primed-orthonormal (as returned by [`min_singular`]).
pub fn kernel_angle<T: Scalar>(problem: &Problem<T>, kernel: &[AugmentedVector<T>], v: &AugmentedVector<T>) -> T {
    let x = v.to_vector();
    let mut rest = x.clone();
    for k in kernel {
        let k = k.to_vector();
        let c = k.dot(&problem.primed_apply(&x));
        rest -= k * c;
    }
    let norm = |y: &DVector<T>| y.dot(&problem.primed_apply(y)).max(T::zero()).sqrt();
    let inside = norm(&(&x - &rest));
    norm(&rest).atan2(inside)
}

/// Criterion predictions when `u` is constant (to rounding).
fn constant_prediction<T: Scalar>(problem: &Problem<T>, u: &Field<T>) -> Result<Option<Vec<(T, usize)>>> {
    let mean = u.mean();
    let scale = mean.abs().max(T::one());
    let flat = u
        .values()
        .iter()
        .all(|&x| (x - mean).abs() <= T::lit(1e-12) * scale);
    if !flat {
        return Ok(None);
    }
    let nu = problem.torus.integral(&u.to_basis());
    let m = Manifold::Torus(problem.torus.clone());
    Ok(Some(degenerate_epsilons(&problem.potential, nu, &m, 4)?))
}

/// Number of negative eigenvalues of the Hessian `S` of `J` at `u`
/// (Sylvester inertia of the pencil with `P`).
///
/// Dense path counts all of them; above the dense limit, the count is taken
/// from a window of the lowest pencil eigenvalues that is widened until it
/// contains a nonnegative one.
pub fn negative_count<T: Scalar>(problem: &Problem<T>, u: &Field<T>, dense_limit: usize) -> Result<usize> {
    check_field(&problem.torus, u)?;
    let curvature = problem.curvature(&u.to_basis());
    let dim = problem.dim() + 1;
    if dim <= dense_limit {
        let s = problem.hessian_matrix(&curvature);
        let scale = problem.primed_diagonal().map(|d| T::one() / d.sqrt());
        let st = DMatrix::from_fn(dim, dim, |i, j| s[(i, j)] * scale[i] * scale[j]);
        let values = st.symmetric_eigenvalues();
        let top = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let floor = T::eps() * T::lit(1e3) * top;
        return Ok(values.iter().filter(|&&v| v < -floor).count());
    }
    let mut window = 8;
    loop {
        let err = std::cell::RefCell::new(None);
        let a = |x: &DMatrix<T>| map_columns(x, |c| Ok(problem.hessian_coords(&curvature, c))).expect("infallible");
        let b = |x: &DMatrix<T>| map_columns(x, |c| Ok(problem.primed_apply(c))).expect("infallible");
        let precond = |x: &DMatrix<T>| {
            map_columns(x, |c| problem.primed_solve(c)).unwrap_or_else(|e| {
                err.borrow_mut().get_or_insert(e);
                x.clone()
            })
        };
        let out = lobpcg(
            &a,
            &b,
            &precond,
            None,
            start_block(dim, window.min(dim)),
            LobpcgOptions {
                tol: T::lit(1e-8),
                max_iter: 500,
            },
        );
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        if !out.converged {
            return Err(Error::NoConvergence {
                method: "LOBPCG inertia window",
                iterations: out.iterations,
                residuals: out.residuals.iter().map(|r| r.as_f64()).collect(),
            });
        }
        let negatives = out.values.iter().filter(|&&v| v < T::zero()).count();
        if negatives < out.values.len() || window >= dim {
            return Ok(negatives);
        }
        window *= 2;
    }
}

#[cfg(test)]
mod tests;
