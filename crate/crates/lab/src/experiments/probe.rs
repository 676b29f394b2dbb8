use cahn_core::degeneracy::{constant_field, degenerate_epsilons, kernel_angle, DegeneracyOptions, DegeneracyReport};
use cahn_core::operators::Problem;
use cahn_core::solver::newton_solve;
use cahn_core::{AugmentedVector, Field, Manifold, Mode, Potential, Torus, TorusGrid, TorusMetric};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{analyze, fmt_k, kernel_dim, potential, stripe_direction, task_rng};
use crate::config::{ExperimentConfig, RunConfig};
use crate::error::{LabError, LabResult};
use crate::record::{Outcome, Table};

/// Striped solutions on flat tori must be degenerate to this relative level.
pub const SYMMETRY_SIGMA: f64 = 1e-6;
/// Largest primed angle between a shift derivative and the numerical kernel.
pub const SHIFT_ANGLE: f64 = 1e-5;

struct Params {
    samples: usize,
    delta: f64,
    eps_range: [f64; 2],
    nu: f64,
    offset: f64,
    phi_amplitude: f64,
    striped_n: usize,
    striped_factor: f64,
}

struct SampleResult {
    g: DMatrix<f64>,
    eps: f64,
    relative_sigma: f64,
    class: String,
    recheck: Option<String>,
    nearest_criterion: f64,
    eps_star: f64,
    multiplicity: usize,
    star: (String, usize),
    minus: (String, f64),
    plus: (String, f64),
}

impl SampleResult {
    fn hit(&self) -> bool {
        self.recheck.as_ref().is_some_and(|r| r != "nondegenerate")
    }

    fn open(&self) -> bool {
        self.star.0 != "nondegenerate"
            && self.star.1 == self.multiplicity
            && self.minus.0 == "nondegenerate"
            && self.plus.0 == "nondegenerate"
    }
}

fn constant_report(torus: &Torus<f64>, pot: &Potential<f64>, nu: f64, eps: f64, opts: &DegeneracyOptions<f64>) -> LabResult<DegeneracyReport<f64>> {
    let problem = Problem::new(eps, torus.clone(), pot.clone())?;
    let (u, _) = constant_field(pot, nu, torus);
    Ok(cahn_core::degeneracy::min_singular(&problem, &u, opts)?)
}

fn probe_sample(i: usize, seed: u64, p: &Params, pot: &Potential<f64>, cfg: &RunConfig) -> LabResult<SampleResult> {
    let mut rng = task_rng(seed, i as u64);
    let d = cfg.manifold.d;
    let mut g = DMatrix::identity(d, d);
    for a in 0..d {
        for b in 0..=a {
            let x = rng.random_range(-p.delta..=p.delta);
            g[(a, b)] += x;
            if a != b {
                g[(b, a)] = g[(a, b)];
            }
        }
    }
    let eps = rng.random_range(p.eps_range[0]..p.eps_range[1]);
    let torus = Torus::new(TorusGrid::new(d, cfg.manifold.n)?, TorusMetric::constant(g.clone()))?;
    let opts = cfg.degeneracy_options();

    // density
    let report = constant_report(&torus, pot, p.nu, eps, &opts)?;
    let recheck = if report.classification.is_degenerate() {
        let finer = DegeneracyOptions {
            tau: opts.tau / 10.0,
            ..opts.clone()
        };
        Some(constant_report(&torus, pot, p.nu, eps, &finer)?.classification.label())
    } else {
        None
    };
    let manifold = Manifold::Torus(torus.clone());
    let levels = degenerate_epsilons(pot, p.nu, &manifold, 8)?;
    let nearest_criterion = levels
        .iter()
        .map(|&(e, _)| (eps - e).abs() / e)
        .fold(f64::INFINITY, f64::min);

    // openness around the largest criterion value
    let (eps_star, multiplicity) = *levels.first().ok_or_else(|| {
        LabError::Config(format!("W''(nu / vol) >= 0 at nu = {}: no degenerate eps to construct", p.nu))
    })?;
    let at = |e: f64| -> LabResult<DegeneracyReport<f64>> { constant_report(&torus, pot, p.nu, e, &opts) };
    let star = at(eps_star)?;
    let minus = at(eps_star - p.offset)?;
    let plus = at(eps_star + p.offset)?;
    Ok(SampleResult {
        g,
        eps,
        relative_sigma: report.relative_sigma_min(),
        class: report.classification.label(),
        recheck,
        nearest_criterion,
        eps_star,
        multiplicity,
        star: (star.classification.label(), kernel_dim(&star)),
        minus: (minus.classification.label(), minus.relative_sigma_min()),
        plus: (plus.classification.label(), plus.relative_sigma_min()),
    })
}

/// Finite-sample probe of genericity: density of nondegenerate constants,
/// isolation of the constructed degenerate `eps`, and conformal symmetry
/// breaking of a striped solution.
pub fn probe_generic(cfg: &RunConfig, seed: u64) -> LabResult<Outcome> {
    let ExperimentConfig::ProbeGeneric {
        samples,
        delta,
        eps_range,
        nu,
        openness_offset,
        phi_amplitude,
        striped_n,
        striped_eps_factor,
        ..
    } = cfg.experiment().clone()
    else {
        unreachable!("dispatched on kind")
    };
    let p = Params {
        samples,
        delta,
        eps_range,
        nu,
        offset: openness_offset,
        phi_amplitude,
        striped_n,
        striped_factor: striped_eps_factor,
    };
    if !(p.delta >= 0.0 && p.delta < 0.5) {
        return Err(LabError::Config("probe delta must lie in [0, 0.5) to keep G positive definite".into()));
    }
    if !(p.eps_range[0] > 0.0 && p.eps_range[1] > p.eps_range[0]) {
        return Err(LabError::Config("probe eps_range must be increasing and positive".into()));
    }
    if cfg.manifold.g.is_some() || !cfg.manifold.phi.is_empty() {
        return Err(LabError::Config(
            "probe-generic samples its own metrics; the manifold block may only set d and N".into(),
        ));
    }
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;

    let results: Vec<LabResult<SampleResult>> =
        (0..p.samples).into_par_iter().map(|i| probe_sample(i, seed, &p, &pot, cfg)).collect();
    let mut density = Table::new(
        "density",
        &["sample", "G", "eps", "relative_sigma_min", "class", "recheck_tau_over_10", "nearest_criterion_rel"],
    );
    let mut openness = Table::new(
        "openness",
        &[
            "sample", "eps_star", "multiplicity", "class_star", "kernel_dim_star", "class_minus", "sigma_rel_minus",
            "class_plus", "sigma_rel_plus", "passed",
        ],
    );
    let mut failures = Vec::new();
    let (mut hits, mut flagged, mut open_ok, mut done) = (0, 0, 0, 0);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                done += 1;
                if s.class != "nondegenerate" {
                    flagged += 1;
                }
                if s.hit() {
                    hits += 1;
                }
                if s.open() {
                    open_ok += 1;
                }
                let g: Vec<String> = s.g.iter().map(|x| format!("{x}")).collect();
                density.push(vec![
                    i.into(),
                    g.join(" ").into(),
                    s.eps.into(),
                    s.relative_sigma.into(),
                    s.class.clone().into(),
                    s.recheck.clone().unwrap_or_default().into(),
                    s.nearest_criterion.into(),
                ]);
                openness.push(vec![
                    i.into(),
                    s.eps_star.into(),
                    s.multiplicity.into(),
                    s.star.0.clone().into(),
                    s.star.1.into(),
                    s.minus.0.clone().into(),
                    s.minus.1.into(),
                    s.plus.0.clone().into(),
                    s.plus.1.into(),
                    s.open().into(),
                ]);
            }
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    out.tables.push(density);
    out.tables.push(openness);
    out.check(
        "samples_completed",
        failures.is_empty(),
        if failures.is_empty() { format!("{done} samples") } else { failures.join("; ") },
    );
    out.check(
        "density",
        hits == 0,
        format!("{hits}/{done} degenerate constant solutions after recheck at tau/10 ({flagged} flagged at tau)"),
    );
    out.check(
        "openness",
        open_ok == done,
        format!("{open_ok}/{done} constructed eps* degenerate with full kernel and nondegenerate at eps* +- {}", p.offset),
    );
    out.set("degenerate_fraction", format!("{hits}/{done}"));

    symmetry_breaking(cfg, &p, &pot, &mut out)?;
    Ok(out)
}

/// A striped solution on the flat torus is degenerate through translations;
/// a conformal factor varying along the stripe removes the degeneracy.
fn symmetry_breaking(cfg: &RunConfig, p: &Params, pot: &Potential<f64>, out: &mut Outcome) -> LabResult<()> {
    let d = cfg.manifold.d;
    if d != 2 {
        out.note("symmetry-breaking probe needs a 2-torus; skipped");
        return Ok(());
    }
    let grid = TorusGrid::new(d, p.striped_n)?;
    let flat = Torus::new(grid.clone(), TorusMetric::identity(d))?;
    let levels = degenerate_epsilons(pot, p.nu, &Manifold::Torus(flat.clone()), 1)?;
    let Some(&(e1, _)) = levels.first() else {
        return Err(LabError::Config("no bifurcation from the constant at this nu".into()));
    };
    let eps = p.striped_factor * e1;
    let c = p.nu / flat.volume();
    let init = Field::from_modes(&grid, &[Mode::cos([1, 0, 0], 0.5)])?.axpy(1.0, &Field::constant(&grid, c));
    let problem = Problem::new(eps, flat.clone(), pot.clone())?;
    let striped = newton_solve(&problem, p.nu, (&init, pot.dw(c)), &cfg.solve_options())?;
    let before = analyze(&striped.problem, &striped.u, cfg)?;
    let direction = stripe_direction(&striped.u);
    let shift = AugmentedVector::new(striped.u.partial(0), 0.0);
    let angle = kernel_angle(&striped.problem, &before.kernel, &shift);

    // perturb along the stripe with half its wavelength
    let k = direction.unwrap_or([1, 0, 0]);
    let phi = Field::from_modes(&grid, &[Mode::cos(k.map(|x| 2 * x), p.phi_amplitude)])?;
    let overlap = phi.dot(&Field::from_modes(&grid, &[Mode::cos(k.map(|x| 2 * x), 1.0)])?);
    let curved = flat.with_metric(TorusMetric::identity(d).with_phi(phi))?;
    let perturbed = Problem::new(eps, curved, pot.clone())?;
    let after_sol = newton_solve(&perturbed, p.nu, (&striped.u, striped.lambda), &cfg.solve_options())?;
    let after = analyze(&after_sol.problem, &after_sol.u, cfg)?;
    let tau = cfg.solver.tau;

    let mut t = Table::new(
        "symmetry_breaking",
        &["stage", "eps", "nu", "N", "residual", "sigma_min", "sigma_max", "relative_sigma_min", "class", "kernel_dim"],
    );
    for (stage, s, r) in [("flat", &striped, &before), ("conformal", &after_sol, &after)] {
        t.push(vec![
            stage.into(),
            eps.into(),
            p.nu.into(),
            p.striped_n.into(),
            s.residual.into(),
            r.sigma_min.into(),
            r.sigma_max.into(),
            r.relative_sigma_min().into(),
            r.classification.label().into(),
            kernel_dim(r).into(),
        ]);
    }
    out.tables.push(t);
    out.set(
        "symmetry_breaking",
        json!({
            "eps": eps,
            "stripe": direction.map(|k| fmt_k(k, d)),
            "shift_kernel_angle": angle,
            "phi_overlap": overlap,
            "relative_sigma_before": before.relative_sigma_min(),
            "relative_sigma_after": after.relative_sigma_min(),
        }),
    );
    out.check(
        "striped_solution_found",
        direction.is_some() && striped.residual <= cfg.solver.tol,
        format!("stripe {}, residual {:e}", direction.map_or("none".to_string(), |k| fmt_k(k, d)), striped.residual),
    );
    out.check(
        "symmetry_degeneracy",
        before.relative_sigma_min() <= SYMMETRY_SIGMA && angle <= SHIFT_ANGLE,
        format!(
            "sigma_min / sigma_max = {:e} (<= {SYMMETRY_SIGMA:e}); shift-derivative angle to kernel {angle:e} (<= {SHIFT_ANGLE:e})",
            before.relative_sigma_min()
        ),
    );
    out.check(
        "symmetry_breaking",
        after.relative_sigma_min() >= 10.0 * tau && after_sol.residual <= cfg.solver.tol,
        format!(
            "after phi = {} cos(2 pi 2k.x): sigma_min / sigma_max = {:e} (>= {:e}), residual {:e}",
            p.phi_amplitude,
            after.relative_sigma_min(),
            10.0 * tau,
            after_sol.residual
        ),
    );
    Ok(())
}
