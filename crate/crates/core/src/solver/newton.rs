use nalgebra::{DMatrix, DVector};

use super::{Contraction, Solution, SolveOptions};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::{gmres, sorted_symmetric_eigen};
use crate::manifold::DENSE_LIMIT;
use crate::operators::{stack, Problem};
use crate::potential::check_field;
use crate::scalar::Scalar;

/// Newton step for the current iterate.
struct Step<T: Scalar> {
    delta: DVector<T>,
    /// Whether the Jacobian was numerically rank deficient and the step is a
    /// pseudo-inverse one.
    rank_deficient: bool,
}

/// `S delta = (-r, int u - nu)`: the Newton system for `F = (0, nu)`
/// multiplied through by `diag(E, -1)`.
fn dense_step<T: Scalar>(
    problem: &Problem<T>,
    curvature: &[T],
    rhs: &DVector<T>,
    tol: T,
) -> Result<Step<T>> {
    let s = problem.hessian_matrix(curvature);
    let scale = problem.primed_diagonal().map(|d| T::one() / d.sqrt());
    let st = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * scale[i] * scale[j]);
    let bt = rhs.component_mul(&scale);
    let lu = st.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<T> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let big = diag.iter().fold(T::zero(), |m, &v| m.max(v));
    let small = diag.iter().fold(big, |m, &v| m.min(v));
    let threshold = T::lit(1e-12).max(T::eps() * T::lit(100.0));
    if big > T::zero() && small > threshold * big {
        if let Some(y) = lu.solve(&bt) {
            return Ok(Step {
                delta: y.component_mul(&scale),
                rank_deficient: false,
            });
        }
    }
    // rank deficient: minimum-norm step on the numerical range, provided the
    // right-hand side has no significant component in the kernel
    let (values, vectors) = sorted_symmetric_eigen(st);
    let top = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let cut = threshold.max(T::lit(1e-10)) * top;
    let mut y = DVector::zeros(bt.len());
    let mut kernel_part = T::zero();
    for (i, &mu) in values.iter().enumerate() {
        let q = vectors.column(i);
        let c = q.dot(&bt);
        if mu.abs() > cut {
            y += q * (c / mu);
        } else {
            kernel_part += c * c;
        }
    }
    let kernel_part = kernel_part.sqrt();
    if kernel_part > T::lit(1e-6) * bt.norm() && kernel_part > tol {
        return Err(Error::SingularJacobian {
            pivot: (small / big).as_f64(),
            residual: kernel_part.as_f64(),
        });
    }
    Ok(Step {
        delta: y.component_mul(&scale),
        rank_deficient: true,
    })
}

/// Matrix-free step: GMRES on `dF delta = -(F - (0, nu))` in the primed inner product.
fn iterative_step<T: Scalar>(
    problem: &Problem<T>,
    curvature: &[T],
    g: &DVector<T>,
    residual: T,
) -> Result<Step<T>> {
    let failure = std::cell::Cell::new(None);
    let apply = |x: &DVector<T>| match problem.df_coords(curvature, x) {
        Ok(y) => y,
        Err(e) => {
            failure.set(Some(e));
            DVector::zeros(x.len())
        }
    };
    let inner = |a: &DVector<T>, b: &DVector<T>| a.dot(&problem.primed_apply(b));
    let forcing = T::lit(1e-2).min(residual).max(T::lit(1e-13));
    let out = gmres(apply, inner, &(-g), forcing, 80, 1500);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    if !out.converged && out.relative_residual > T::lit(0.5) {
        return Err(Error::SingularJacobian {
            pivot: f64::NAN,
            residual: out.relative_residual.as_f64(),
        });
    }
    Ok(Step {
        delta: out.solution,
        rank_deficient: !out.converged,
    })
}

/// Damped Newton iteration for `F_W(eps, g, u, lambda) = (0, nu)`.
///
/// Linear solves are dense (equilibrated full-pivot LU) up to
/// [`DENSE_LIMIT`] unknowns, GMRES above. The step is halved up to
/// `opts.max_halvings` times until the primed residual decreases.
pub fn newton_solve<T: Scalar>(
    problem: &Problem<T>,
    nu: T,
    init: (&Field<T>, T),
    opts: &SolveOptions<T>,
) -> Result<Solution<T>> {
    check_field(&problem.torus, init.0)?;
    let n = problem.dim();
    let dense = n < opts.dense_limit.unwrap_or(DENSE_LIMIT);
    let mut x = stack(&init.0.to_basis(), init.1);
    let eval = |x: &DVector<T>| -> Result<(DVector<T>, T)> {
        let u = x.rows(0, n).into_owned();
        let mut f = problem.f_coords(&u, x[n])?;
        f[n] -= nu;
        let r = problem.primed_norm(&f, T::zero());
        Ok((f, r))
    };
    let (mut g, mut res) = eval(&x)?;
    if !res.is_finite() {
        return Err(Error::InvalidArgument("initial residual is not finite".into()));
    }
    let mut history = vec![res];
    let mut rank_deficient = false;
    let mut polish = 0;
    let mut iterations = 0;
    loop {
        if res <= opts.tol {
            // a couple of extra steps push the residual to the rounding floor,
            // where the strong-form residual is also small
            if polish >= opts.polish_steps || res == T::zero() {
                break;
            }
        } else if iterations >= opts.max_iter {
            return Err(Error::MaxIterExceeded {
                max_iter: opts.max_iter,
                history: history.iter().map(|r| r.as_f64()).collect(),
            });
        }
        let u = x.rows(0, n).into_owned();
        let curvature = problem.curvature(&u);
        let step = if dense {
            let r = problem.weak_residual(&u, x[n]);
            let rhs = stack(&(-r), g[n]);
            dense_step(problem, &curvature, &rhs, opts.tol)?
        } else {
            iterative_step(problem, &curvature, &g, res)?
        };
        rank_deficient |= step.rank_deficient;
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &x + &step.delta * t;
            let (gt, rt) = eval(&trial)?;
            if rt.is_finite() && rt < res {
                accepted = Some((trial, gt, rt));
                break;
            }
            t *= T::lit(0.5);
        }
        match accepted {
            Some((xn, gn, rn)) => {
                x = xn;
                g = gn;
                res = rn;
                history.push(res);
                iterations += 1;
                if res <= opts.tol {
                    polish += 1;
                }
            }
            None if res <= opts.tol => break,
            None => {
                return Err(Error::LineSearchFailed {
                    halvings: opts.max_halvings,
                    residual: res.as_f64(),
                })
            }
        }
    }
    let u = Field::from_basis(problem.torus.grid(), &x.rows(0, n).into_owned());
    let mass_error = (problem.torus.integral(&u.to_basis()) - nu).abs();
    Ok(Solution {
        u,
        lambda: x[n],
        problem: problem.clone(),
        nu,
        residual: res,
        mass_error,
        iterations,
        contraction: Contraction::fit(&history),
        history,
        rank_deficient,
    })
}
