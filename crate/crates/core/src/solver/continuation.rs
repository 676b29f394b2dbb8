use super::{newton_solve, Solution, SolveOptions};
use crate::degeneracy::negative_count;
use crate::error::{Error, Result};
use crate::manifold::DENSE_LIMIT;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ContinuationOptions<T> {
    pub solve: SolveOptions<T>,
    /// Bracket width at which bisection stops; also the smallest step tried
    /// after a failed solve.
    pub floor: T,
    pub dense_limit: usize,
}

impl<T: Scalar> Default for ContinuationOptions<T> {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            floor: T::lit(1e-6),
            dense_limit: DENSE_LIMIT,
        }
    }
}

/// An interval of `eps` across which the Hessian inertia changed, so that a
/// degenerate solution lies inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateBracket<T> {
    pub lo: T,
    pub hi: T,
    pub negative_lo: usize,
    pub negative_hi: usize,
}

impl<T: Scalar> DegenerateBracket<T> {
    pub fn contains(&self, eps: T) -> bool {
        self.lo <= eps && eps <= self.hi
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) * T::lit(0.5)
    }
}

#[derive(Clone, Debug)]
pub struct ContinuationOutcome<T: Scalar> {
    /// Solutions at each target reached, in order.
    pub solutions: Vec<Solution<T>>,
    pub negative_counts: Vec<usize>,
    pub brackets: Vec<DegenerateBracket<T>>,
    /// Why the run stopped early, if it did.
    pub diagnostic: Option<String>,
}

impl<T: Scalar> ContinuationOutcome<T> {
    pub fn complete(&self) -> bool {
        self.diagnostic.is_none()
    }
}

fn solve_at<T: Scalar>(from: &Solution<T>, eps: T, opts: &ContinuationOptions<T>) -> Result<(Solution<T>, usize)> {
    let problem = from.problem.with_eps(eps)?;
    let s = newton_solve(&problem, from.nu, (&from.u, from.lambda), &opts.solve)?;
    let neg = negative_count(&s.problem, &s.u, opts.dense_limit)?;
    Ok((s, neg))
}

/// Natural-parameter continuation in `eps` from `start` through `targets`.
///
/// Each step is a Newton solve seeded with the previous solution; a failed
/// solve is retried from the midpoint until the step falls below
/// `opts.floor`, at which point the partial result is returned with a
/// diagnostic. Whenever the number of negative Hessian eigenvalues changes
/// between consecutive solutions, the interval is bisected to width
/// `opts.floor` and recorded as a bracket.
pub fn continuation<T: Scalar>(
    start: &Solution<T>,
    targets: &[T],
    opts: &ContinuationOptions<T>,
) -> Result<ContinuationOutcome<T>> {
    if !(opts.floor > T::zero()) {
        return Err(Error::InvalidArgument("continuation floor must be positive".into()));
    }
    let mut prev = start.clone();
    let mut prev_neg = negative_count(&prev.problem, &prev.u, opts.dense_limit)?;
    let mut out = ContinuationOutcome {
        solutions: Vec::new(),
        negative_counts: Vec::new(),
        brackets: Vec::new(),
        diagnostic: None,
    };
    for &target in targets {
        while prev.eps() != target {
            let mut next = target;
            let (sol, neg) = loop {
                match solve_at(&prev, next, opts) {
                    Ok(found) => break found,
                    Err(e) => {
                        let step = (next - prev.eps()) * T::lit(0.5);
                        if step.abs() < opts.floor {
                            out.diagnostic = Some(format!(
                                "continuation stalled between eps = {:.8e} and {:.8e}: {e}",
                                prev.eps().as_f64(),
                                next.as_f64()
                            ));
                            return Ok(out);
                        }
                        next = prev.eps() + step;
                    }
                }
            };
            if neg != prev_neg {
                out.brackets.push(bisect(&prev, prev_neg, &sol, neg, opts)?);
            }
            prev = sol;
            prev_neg = neg;
        }
        out.solutions.push(prev.clone());
        out.negative_counts.push(prev_neg);
    }
    Ok(out)
}

fn bisect<T: Scalar>(
    a: &Solution<T>,
    neg_a: usize,
    b: &Solution<T>,
    neg_b: usize,
    opts: &ContinuationOptions<T>,
) -> Result<DegenerateBracket<T>> {
    let (mut a, mut neg_a, mut b, mut neg_b) = (a.clone(), neg_a, b.clone(), neg_b);
    while (b.eps() - a.eps()).abs() > opts.floor {
        let mid = (a.eps() + b.eps()) * T::lit(0.5);
        // seed from the side whose inertia is unchanged; fall back to the other
        let (s, neg) = match solve_at(&a, mid, opts) {
            Ok(found) => found,
            Err(_) => match solve_at(&b, mid, opts) {
                Ok(found) => found,
                Err(_) => break,
            },
        };
        if neg == neg_a {
            a = s;
            neg_a = neg;
        } else {
            b = s;
            neg_b = neg;
        }
    }
    let (lo, hi, negative_lo, negative_hi) = if a.eps() <= b.eps() {
        (a.eps(), b.eps(), neg_a, neg_b)
    } else {
        (b.eps(), a.eps(), neg_b, neg_a)
    };
    Ok(DegenerateBracket {
        lo,
        hi,
        negative_lo,
        negative_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneracy::constant_field;
    use crate::manifold::Torus;
    use crate::operators::Problem;
    use crate::potential::Potential;
    use std::f64::consts::PI;

    fn start(eps: f64, nu: f64) -> Solution<f64> {
        let p = Problem::new(eps, Torus::flat(2, 16).unwrap(), Potential::double_well()).unwrap();
        let (u, l) = constant_field(&p.potential, nu, &p.torus);
        newton_solve(&p, nu, (&u, l), &SolveOptions::default()).unwrap()
    }

    #[test]
    fn brackets_first_degenerate_eps_on_constant_branch() {
        let s = start(0.2, 0.1);
        let out = continuation(&s, &[0.18, 0.16, 0.14], &ContinuationOptions::default()).unwrap();
        assert!(out.complete());
        assert_eq!(out.solutions.len(), 3);
        let expected = (0.97f64).sqrt() / (2.0 * PI);
        assert_eq!(out.brackets.len(), 1, "{:?}", out.brackets);
        let b = &out.brackets[0];
        assert!(b.hi - b.lo <= 1e-6 + 1e-15);
        assert!((b.midpoint() - expected).abs() < 1e-4, "{b:?} vs {expected}");
        assert_eq!(b.negative_lo, b.negative_hi + 4);
    }

    #[test]
    fn no_brackets_above_first_criterion() {
        let s = start(0.3, 0.1);
        let out = continuation(&s, &[0.25, 0.2, 0.17], &ContinuationOptions::default()).unwrap();
        assert!(out.complete() && out.brackets.is_empty());
        assert!(out.negative_counts.iter().all(|&n| n == out.negative_counts[0]));
    }
}
