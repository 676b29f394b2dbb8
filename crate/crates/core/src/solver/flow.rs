use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::operators::{energy_solve, Problem};
use crate::potential::check_field;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct FlowOptions<T> {
    pub steps: usize,
    pub dt: T,
    /// Halvings of `dt` allowed in a single step before giving up.
    pub max_halvings: usize,
}

impl<T: Scalar> Default for FlowOptions<T> {
    fn default() -> Self {
        Self {
            steps: 200,
            dt: T::lit(0.5),
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowOutcome<T: Scalar> {
    pub field: Field<T>,
    /// Multiplier of the last step (an estimate of `lambda`).
    pub lambda: T,
    /// `J` after each accepted step, starting with the initial value.
    pub energies: Vec<T>,
    /// Largest `|int u dmu_g - nu|` seen after any step.
    pub max_mass_error: T,
    pub dt: T,
}

/// Semi-implicit flow `u_t = -(-eps^2 Lap u + W'(u) - lambda)` at fixed mass.
///
/// `(-eps^2 Lap + 1)` is implicit and `u - W'(u)` explicit; the multiplier of
/// each step is chosen so that `int u dmu_g = nu` holds exactly. A step that
/// raises `J` is retried with half the time step.
pub fn gradient_flow<T: Scalar>(
    problem: &Problem<T>,
    nu: T,
    init: &Field<T>,
    opts: &FlowOptions<T>,
) -> Result<FlowOutcome<T>> {
    check_field(&problem.torus, init)?;
    if !(opts.dt > T::zero()) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let torus = &problem.torus;
    let grid = torus.grid();
    let mut u = init.to_basis();
    // project onto the mass constraint by adding a constant
    let shift = (nu - torus.integral(&u)) / torus.volume();
    u[0] += shift;
    let j = |c: &DVector<T>| problem.j_value(&Field::from_basis(grid, c), T::zero(), nu);
    let mut energies = vec![j(&u)?];
    let mut dt = opts.dt;
    let mut lambda = T::zero();
    let mut max_mass_error = (torus.integral(&u) - nu).abs();
    let m1 = torus.mass_of_one();
    for _ in 0..opts.steps {
        let current = *energies.last().expect("nonempty");
        let mut halvings = 0;
        loop {
            let one = T::one();
            let e_eff = (dt / (one + dt)).sqrt() * problem.eps;
            let pu = grid.padded_from_basis(&u);
            let explicit: Vec<T> = pu.iter().map(|&x| x - problem.potential.dw(x)).collect();
            let rhs = (torus.mass(&u) + torus.weighted_projection(&explicit) * dt) / (one + dt);
            let w = energy_solve(e_eff, torus, &rhs)?;
            let z = energy_solve(e_eff, torus, &(&m1 * (dt / (one + dt))))?;
            let lam = (nu - torus.integral(&w)) / torus.integral(&z);
            let next = w + z * lam;
            let e_next = j(&next)?;
            let tol = T::lit(1e-12) * current.abs().max(T::one());
            if e_next.is_finite() && e_next <= current + tol {
                u = next;
                lambda = lam;
                energies.push(e_next);
                max_mass_error = max_mass_error.max((torus.integral(&u) - nu).abs());
                break;
            }
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::StepRejected {
                    halvings: opts.max_halvings,
                    increase: (e_next - current).as_f64(),
                });
            }
            dt *= T::lit(0.5);
        }
    }
    Ok(FlowOutcome {
        field: Field::from_basis(grid, &u),
        lambda,
        energies,
        max_mass_error,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Mode;
    use crate::manifold::Torus;
    use crate::potential::Potential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(eps: f64) -> Problem<f64> {
        Problem::new(eps, Torus::flat(2, 16).unwrap(), Potential::double_well()).unwrap()
    }

    #[test]
    fn constant_is_fixed_point() {
        let p = problem(0.1);
        let c = Field::constant(p.torus.grid(), 0.3);
        let out = gradient_flow(&p, 0.3, &c, &FlowOptions { steps: 5, ..Default::default() }).unwrap();
        assert!((&out.field - &c).max_abs() < 1e-14);
        assert!((out.lambda - (0.027 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn large_eps_flows_to_constant() {
        let p = problem(1.0);
        let g = p.torus.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let init = Field::from_values(g, &vals).unwrap();
        let nu = 0.1;
        let target = Field::constant(g, nu);
        let mut dist = f64::INFINITY;
        let mut u = init;
        for _ in 0..5 {
            let out = gradient_flow(&p, nu, &u, &FlowOptions { steps: 20, ..Default::default() }).unwrap();
            assert!(out.energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(out.max_mass_error <= 1e-12);
            u = out.field;
            let d = (&u - &target).l2_norm();
            assert!(d < dist);
            dist = d;
        }
        assert!(dist < 1e-6);
    }

    #[test]
    fn striped_descends_below_constant() {
        let eps = 0.7 / (2.0 * PI);
        let p = problem(eps);
        let g = p.torus.grid();
        let init = Field::from_modes(g, &[Mode::cos([1, 0, 0], 0.05)]).unwrap();
        let out = gradient_flow(&p, 0.0, &init, &FlowOptions { steps: 200, dt: 1.0, ..Default::default() }).unwrap();
        let j_const = p.j_value(&Field::zeros(g), 0.0, 0.0).unwrap();
        assert!(*out.energies.last().unwrap() < j_const - 1e-3);
        assert!(out.energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
