use cahn_core::operators::Problem;
use cahn_core::solver::{gradient_flow, newton_solve, FlowOptions};

use super::{analyze, field_rows, fmt_k, initial_field, kernel_dim, oracle_match, potential, spread, stripe_direction};
use crate::config::{ModeConfig, RunConfig};
use crate::error::LabResult;
use crate::oracle::MIN_MESH;
use crate::record::{Cell, Outcome, Table};

/// One solve from a configured initial field, with its degeneracy report and,
/// for stripes on constant metrics, the 1D oracle comparison.
pub fn solve(cfg: &RunConfig, eps: f64, nu: f64, init: &[ModeConfig], flow: bool) -> LabResult<Outcome> {
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;
    let torus = cfg.torus()?;
    let problem = Problem::new(eps, torus.clone(), pot)?;
    let mut u0 = initial_field(&torus, nu, init)?;
    let mut lambda0 = 0.0;
    if flow {
        let f = gradient_flow(
            &problem,
            nu,
            &u0,
            &FlowOptions {
                steps: cfg.solver.flow_steps,
                dt: cfg.solver.flow_dt,
                max_halvings: cfg.solver.max_halvings,
            },
        )?;
        out.set("flow_max_mass_error", f.max_mass_error);
        out.set("flow_final_energy", f.energies.last().copied());
        u0 = f.field;
        lambda0 = f.lambda;
    }
    let sol = newton_solve(&problem, nu, (&u0, lambda0), &cfg.solve_options())?;
    let report = analyze(&sol.problem, &sol.u, cfg)?;
    let strong = sol.strong_residual()?;
    let j = sol.j_value()?;
    let stripe = stripe_direction(&sol.u);
    let kind = match stripe {
        _ if spread(&sol.u) <= 1e-10 => "constant".to_string(),
        Some(k) => format!("stripe {}", fmt_k(k, torus.dim())),
        None => "2d".to_string(),
    };

    let mut t = Table::new(
        "solution",
        &[
            "eps", "nu", "lambda", "residual", "mass_error", "strong_residual", "iterations", "J", "sigma_min",
            "sigma_max", "class", "kernel_dim", "contraction_C", "order", "kind",
        ],
    );
    t.push(vec![
        eps.into(),
        nu.into(),
        sol.lambda.into(),
        sol.residual.into(),
        sol.mass_error.into(),
        strong.into(),
        sol.iterations.into(),
        j.into(),
        report.sigma_min.into(),
        report.sigma_max.into(),
        report.classification.label().into(),
        kernel_dim(&report).into(),
        sol.contraction.constant.unwrap_or(f64::NAN).into(),
        sol.contraction.order.unwrap_or(f64::NAN).into(),
        kind.clone().into(),
    ]);
    out.tables.push(t);
    let mut f = Table::new("field", &["i", "j", "u"]);
    for (i, jj, v) in field_rows(&sol.u) {
        f.push(vec![Cell::from(i), Cell::from(jj), Cell::from(v)]);
    }
    if !f.rows.is_empty() {
        out.tables.push(f);
    }

    let tol = cfg.solver.tol;
    out.check(
        "level_set_residual",
        sol.residual <= tol,
        format!("primed residual {:e} (tol {tol:e})", sol.residual),
    );
    out.check("mass_error", sol.mass_error <= tol, format!("{:e} (tol {tol:e})", sol.mass_error));
    if sol.contraction.quadratic == Some(false) {
        out.note(format!(
            "final Newton stage is not quadratic (observed order {:?}); the solution is likely near-degenerate",
            sol.contraction.order
        ));
    }
    if let Some(k) = stripe.filter(|_| torus.has_constant_metric() && kind != "constant") {
        match oracle_match(&sol, k, MIN_MESH) {
            Ok(m) => {
                out.check(
                    "oracle_agreement",
                    m.agrees(),
                    format!("|dlambda| = {:e}, aligned L2 distance = {:e}", m.lambda_diff, m.distance),
                );
                out.set("oracle_lambda", m.profile.lambda);
            }
            Err(e) => out.check("oracle_agreement", false, format!("1D oracle failed: {e}")),
        }
    }
    out.set("kind", kind);
    out.set("classification", report.classification.label());
    out.set("relative_sigma_min", report.relative_sigma_min());
    out.set("rank_deficient_steps", sol.rank_deficient);
    Ok(out)
}
