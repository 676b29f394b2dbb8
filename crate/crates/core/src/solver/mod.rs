//! Solution finding for `F_W(eps, g, u, lambda) = (0, nu)`: damped Newton,
//! a mass-conserving gradient flow to initialize it, and continuation in `eps`.

mod continuation;
mod flow;
mod newton;

pub use continuation::{continuation, ContinuationOptions, ContinuationOutcome, DegenerateBracket};
pub use flow::{gradient_flow, FlowOptions, FlowOutcome};
pub use newton::newton_solve;

use crate::error::Result;
use crate::field::Field;
use crate::manifold::Torus;
use crate::operators::Problem;
use crate::potential::Potential;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct SolveOptions<T> {
    /// Primed-norm tolerance on `F - (0, nu)`.
    pub tol: T,
    pub max_iter: usize,
    /// Backtracking halvings per step.
    pub max_halvings: usize,
    /// Extra Newton steps once `tol` is met (each must decrease the residual).
    pub polish_steps: usize,
    /// Largest augmented dimension assembled densely; `None` uses the crate default.
    pub dense_limit: Option<usize>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 50,
            max_halvings: 20,
            polish_steps: 2,
            dense_limit: None,
        }
    }
}

/// Final-stage behaviour of the residual history.
#[derive(Clone, Debug, PartialEq)]
pub struct Contraction<T> {
    /// Fitted `C` in `e_{k+1} <= C e_k^2` over the last valid pairs.
    pub constant: Option<T>,
    /// Observed order `log(e_{k+1}/e_k) / log(e_k/e_{k-1})` for the last triple.
    pub order: Option<T>,
    /// `Some(false)` flags a run with at least three iterations whose
    /// final stage is not quadratic (typically a near-degenerate solution).
    pub quadratic: Option<bool>,
}

impl<T: Scalar> Contraction<T> {
    pub fn fit(history: &[T]) -> Self {
        let floor = T::eps() * T::lit(1e3);
        let valid: Vec<usize> = (0..history.len().saturating_sub(1))
            .filter(|&k| history[k + 1] > floor && history[k] < T::one())
            .collect();
        let constant = valid
            .iter()
            .rev()
            .take(2)
            .map(|&k| history[k + 1] / (history[k] * history[k]))
            .fold(None, |m: Option<T>, c| Some(m.map_or(c, |m| m.max(c))));
        let triple = (2..history.len())
            .rev()
            .find(|&k| history[k] > floor && history[k - 1] < T::one() && history[k - 2] > history[k - 1]);
        let order = triple.map(|k| {
            (history[k] / history[k - 1]).ln() / (history[k - 1] / history[k - 2]).ln()
        });
        let quadratic = if history.len() >= 4 {
            order.map(|p| p >= T::lit(1.5))
        } else {
            None
        };
        Self {
            constant,
            order,
            quadratic,
        }
    }
}

/// A solution `(u, lambda)` of the constrained problem with its context.
#[derive(Clone, Debug)]
pub struct Solution<T: Scalar> {
    pub u: Field<T>,
    pub lambda: T,
    pub problem: Problem<T>,
    pub nu: T,
    /// Primed norm of `F(u, lambda) - (0, nu)`.
    pub residual: T,
    /// `|int u dmu_g - nu|`.
    pub mass_error: T,
    pub iterations: usize,
    pub history: Vec<T>,
    pub contraction: Contraction<T>,
    /// Some Newton step met a numerically singular Jacobian.
    pub rank_deficient: bool,
}

impl<T: Scalar> Solution<T> {
    pub fn eps(&self) -> T {
        self.problem.eps
    }

    pub fn torus(&self) -> &Torus<T> {
        &self.problem.torus
    }

    pub fn potential(&self) -> &Potential<T> {
        &self.problem.potential
    }

    /// `|| -eps^2 Lap_g u + W'(u) - lambda ||_{L^2}`.
    pub fn strong_residual(&self) -> Result<T> {
        self.problem.strong_residual(&self.u, self.lambda)
    }

    pub fn j_value(&self) -> Result<T> {
        self.problem.j_value(&self.u, self.lambda, self.nu)
    }
}
