use cahn_core::operators::Problem;
use cahn_core::solver::newton_solve;
use cahn_core::{Field, Mode};

use super::{potential, ORACLE_TOL};
use crate::align::align;
use crate::config::{ManifoldKind, RunConfig};
use crate::error::{LabError, LabResult};
use crate::oracle::{extend, oracle_1d, Profile};
use crate::record::{Outcome, Table};

/// Mesh refinement may move `lambda` by at most this much.
pub const REFINEMENT_TOL: f64 = 1e-8;
/// The tensor extension must satisfy the torus level-set equation to this level.
pub const EXTENSION_TOL: f64 = 1e-8;

/// The 1D oracle, its mesh refinement, and its cross-check against an
/// independently computed torus stripe along the first axis.
pub fn oracle1d(cfg: &RunConfig, eps: f64, nu: f64, period: f64, mesh: usize, compare_n: usize) -> LabResult<Outcome> {
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;
    let profile = match oracle_1d(&pot, eps, nu, period, mesh) {
        Ok(p) => p,
        Err(LabError::NotFound(why)) => {
            out.set("found", false);
            out.set("reason", why.clone());
            out.note(format!("no nonconstant 1D solution: {why}"));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.set("found", true);
    let fine = oracle_1d(&pot, eps, nu, period, 2 * mesh)?;

    let mut t = Table::new("profile", &["x", "u"]);
    for (x, u) in profile.x.iter().zip(&profile.u) {
        t.push(vec![(*x).into(), (*u).into()]);
    }
    out.tables.push(t);
    let mut o = Table::new("oracle", &["mesh", "lambda", "residual", "iterations"]);
    for p in [&profile, &fine] {
        o.push(vec![p.mesh.into(), p.lambda.into(), p.residual.into(), p.iterations.into()]);
    }
    out.tables.push(o);

    let dl = (fine.lambda - profile.lambda).abs();
    out.check(
        "mesh_refinement",
        dl <= REFINEMENT_TOL,
        format!("|lambda({}) - lambda({mesh})| = {dl:e} (tol {REFINEMENT_TOL:e})", 2 * mesh),
    );
    if nu == 0.0 {
        let odd = profile.odd_symmetry_error();
        out.check("odd_symmetry", odd <= 1e-10, format!("max |U(x + P/2) + U(x)| = {odd:e}"));
    }
    out.set("lambda", profile.lambda);

    if compare_n > 0 {
        compare_with_torus(cfg, &profile, compare_n, &mut out)?;
    }
    Ok(out)
}

fn compare_with_torus(cfg: &RunConfig, profile: &Profile, n: usize, out: &mut Outcome) -> LabResult<()> {
    let m = &cfg.manifold;
    if m.kind != ManifoldKind::Torus || m.d != 2 || m.g.is_some() || !m.phi.is_empty() {
        out.note("torus cross-check runs on the flat unit 2-torus only; skipped");
        return Ok(());
    }
    if profile.period != 1.0 {
        out.note("torus cross-check needs period 1; skipped");
        return Ok(());
    }
    let pot = cfg.potential()?;
    let torus = cfg.torus_with_n(n)?;
    let problem = Problem::new(profile.eps, torus.clone(), pot.clone())?;
    let k = [1, 0, 0];
    let ext = extend(profile, &torus, k);
    let ext_residual = problem.level_set_residual(&ext, profile.lambda, profile.nu)?;
    out.check(
        "extension_level_set",
        ext_residual <= EXTENSION_TOL,
        format!("|F(U(x1), lambda) - (0, nu)| = {ext_residual:e} on N = {n} (tol {EXTENSION_TOL:e})"),
    );

    // independent torus solve from a plain cosine start
    let c = profile.nu;
    let init = Field::from_modes(torus.grid(), &[Mode::cos(k, 0.5)])?.axpy(1.0, &Field::constant(torus.grid(), c));
    let sol = newton_solve(&problem, profile.nu, (&init, pot.dw(c)), &cfg.solve_options())?;
    let (shift, distance) = align(&ext, &sol.u);
    let dl = (sol.lambda - profile.lambda).abs();
    let mut t = Table::new("torus_comparison", &["N", "lambda_torus", "lambda_oracle", "lambda_diff", "aligned_l2", "shift_x1"]);
    t.push(vec![n.into(), sol.lambda.into(), profile.lambda.into(), dl.into(), distance.into(), shift[0].into()]);
    out.tables.push(t);
    out.check(
        "torus_agreement",
        dl <= ORACLE_TOL && distance <= ORACLE_TOL && sol.residual <= cfg.solver.tol,
        format!("|dlambda| = {dl:e}, aligned L2 = {distance:e} (tol {ORACLE_TOL:e}); torus residual {:e}", sol.residual),
    );
    Ok(())
}
