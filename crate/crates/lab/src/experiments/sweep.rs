use cahn_core::degeneracy::{constant_field, degenerate_epsilons, DegeneracyReport};
use cahn_core::operators::Problem;
use cahn_core::solver::{continuation, newton_solve, ContinuationOptions, Solution};
use cahn_core::{Manifold, Potential, Torus};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use super::{analyze, initial_field, kernel_dim, potential, spread};
use crate::config::{Branch, ModeConfig, RunConfig};
use crate::error::{LabError, LabResult};
use crate::record::{Cell, Outcome, Table};

/// Relative agreement required between a located dip and its prediction.
pub const DIP_TOL: f64 = 1e-4;

struct Row {
    eps: f64,
    solved: Result<(Solution<f64>, DegeneracyReport<f64>), String>,
    negative: Option<usize>,
}

impl Row {
    fn sigma(&self) -> Option<f64> {
        self.solved.as_ref().ok().map(|(_, r)| r.sigma_min)
    }

    fn signed(&self) -> Option<f64> {
        self.solved.as_ref().ok().and_then(|(_, r)| r.signed.first().copied())
    }
}

struct Dip {
    /// Grid index of the local minimum.
    index: usize,
    fitted: f64,
    refined: f64,
    kernel_dim: usize,
    relative_sigma: f64,
}

fn grid(min: f64, max: f64, step: f64) -> LabResult<Vec<f64>> {
    if !(min > 0.0 && max > min && step > 0.0) {
        return Err(LabError::Config(format!(
            "sweep needs 0 < eps_min < eps_max and eps_step > 0 (got {min}, {max}, {step})"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(LabError::Config(format!("sweep grid of {count} rows is too large")));
    }
    Ok((0..=count).map(|i| min + i as f64 * step).collect())
}

/// Degenerate `eps` of the constant branch down to `eps_min` (or all the
/// first `j_max` levels, whichever is more).
fn criterion_levels(pot: &Potential<f64>, nu: f64, m: &Manifold<f64>, j_max: usize, eps_min: f64) -> LabResult<Vec<(f64, usize)>> {
    let mut j = j_max.max(1);
    loop {
        let p = degenerate_epsilons(pot, nu, m, j)?;
        if p.len() < j || p.last().is_none_or(|l| l.0 < eps_min) || j >= 1024 {
            return Ok(p);
        }
        j *= 2;
    }
}

/// Coefficients `(a, b, c)` of the least-squares parabola `a t^2 + b t + c`.
fn fit_quadratic(t: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let a = DMatrix::from_fn(t.len(), 3, |i, j| t[i].powi(2 - j as i32));
    let b = DVector::from_column_slice(y);
    let x = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some((x[0], x[1], x[2]))
}

/// Real root of `a t^2 + b t + c` nearest `0`, within `|t| <= reach`.
fn nearest_root(a: f64, b: f64, c: f64, reach: f64) -> Option<f64> {
    let roots: Vec<f64> = if a.abs() <= 1e-14 * (b.abs() + c.abs()) {
        if b == 0.0 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            // stable quadratic formula
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let mut r = vec![];
            if q != 0.0 {
                r.push(c / q);
            }
            r.push(q / a);
            r
        }
    };
    roots
        .into_iter()
        .filter(|r| r.is_finite() && r.abs() <= reach)
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
}

/// Root of the signed smallest pencil eigenvalue in `[lo, hi]` by Illinois
/// regula falsi, with fresh solves seeded from `seed`.
fn refine_root(
    seed: &Solution<f64>,
    cfg: &RunConfig,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
) -> LabResult<(f64, DegeneracyReport<f64>)> {
    let eval = |eps: f64| -> LabResult<(f64, DegeneracyReport<f64>)> {
        let p = seed.problem.with_eps(eps)?;
        let s = newton_solve(&p, seed.nu, (&seed.u, seed.lambda), &cfg.solve_options())?;
        let r = analyze(&s.problem, &s.u, cfg)?;
        Ok((r.signed.first().copied().unwrap_or(f64::NAN), r))
    };
    let mut best = None;
    for _ in 0..80 {
        let c = b - fb * (b - a) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let (fc, rc) = eval(c)?;
        let done = fc == 0.0 || (b - a).abs() <= 1e-14 * c.abs();
        best = Some((c, rc));
        if done {
            break;
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
        if (b - a).abs() <= 1e-14 * b.abs() {
            break;
        }
    }
    best.ok_or_else(|| LabError::NotFound("dip refinement made no step".into()))
}

fn constant_rows(grid: &[f64], torus: &Torus<f64>, pot: &Potential<f64>, nu: f64, cfg: &RunConfig) -> Vec<Row> {
    grid.par_iter()
        .map(|&eps| {
            let solved = (|| -> LabResult<_> {
                let problem = Problem::new(eps, torus.clone(), pot.clone())?;
                let (u0, l0) = constant_field(pot, nu, torus);
                let sol = newton_solve(&problem, nu, (&u0, l0), &cfg.solve_options())?;
                let report = analyze(&sol.problem, &sol.u, cfg)?;
                Ok((sol, report))
            })()
            .map_err(|e| e.to_string());
            Row {
                eps,
                solved,
                negative: None,
            }
        })
        .collect()
}

fn continued_rows(
    grid: &[f64],
    torus: &Torus<f64>,
    pot: &Potential<f64>,
    nu: f64,
    init: &[ModeConfig],
    cfg: &RunConfig,
    out: &mut Outcome,
) -> LabResult<Vec<Row>> {
    let top = *grid.last().expect("nonempty grid");
    let problem = Problem::new(top, torus.clone(), pot.clone())?;
    let u0 = initial_field(torus, nu, init)?;
    let l0 = pot.dw(nu / torus.volume());
    let start = newton_solve(&problem, nu, (&u0, l0), &cfg.solve_options())?;
    let targets: Vec<f64> = grid.iter().rev().copied().collect();
    let opts = ContinuationOptions {
        solve: cfg.solve_options(),
        floor: cfg.solver.continuation_floor,
        dense_limit: cfg.solver.dense_limit,
    };
    let cont = continuation(&start, &targets, &opts)?;
    if let Some(d) = &cont.diagnostic {
        out.note(format!("continuation stopped early: {d}"));
    }
    let mut brackets = Table::new("brackets", &["eps_lo", "eps_hi", "negative_lo", "negative_hi"]);
    for b in &cont.brackets {
        brackets.push(vec![b.lo.into(), b.hi.into(), b.negative_lo.into(), b.negative_hi.into()]);
    }
    out.set(
        "brackets",
        cont.brackets
            .iter()
            .map(|b| json!({"lo": b.lo, "hi": b.hi, "negative_lo": b.negative_lo, "negative_hi": b.negative_hi}))
            .collect::<Vec<_>>(),
    );
    out.tables.push(brackets);
    let reached: Vec<(Solution<f64>, usize)> = cont.solutions.into_iter().zip(cont.negative_counts).collect();
    let analyzed: Vec<Result<DegeneracyReport<f64>, String>> = reached
        .par_iter()
        .map(|(s, _)| analyze(&s.problem, &s.u, cfg).map_err(|e| e.to_string()))
        .collect();
    let mut rows: Vec<Row> = targets
        .iter()
        .enumerate()
        .map(|(i, &eps)| match (reached.get(i), analyzed.get(i)) {
            (Some((s, neg)), Some(Ok(r))) => Row {
                eps,
                solved: Ok((s.clone(), r.clone())),
                negative: Some(*neg),
            },
            (Some((_, neg)), Some(Err(e))) => Row {
                eps,
                solved: Err(e.clone()),
                negative: Some(*neg),
            },
            _ => Row {
                eps,
                solved: Err("not reached by continuation".into()),
                negative: None,
            },
        })
        .collect();
    rows.reverse();
    Ok(rows)
}

/// Local minima of `sigma_min` whose 5-point signed fit has a root nearby,
/// refined to the root of the signed eigenvalue.
fn locate_dips(rows: &[Row], cfg: &RunConfig, out: &mut Outcome) -> LabResult<Vec<Dip>> {
    let n = rows.len();
    let mut dips = Vec::new();
    if n < 5 {
        out.note("fewer than 5 sweep rows: no dip detection");
        return Ok(dips);
    }
    for i in 1..n - 1 {
        let (Some(s0), Some(s1), Some(s2)) = (rows[i - 1].sigma(), rows[i].sigma(), rows[i + 1].sigma()) else {
            continue;
        };
        if !(s1 <= s0 && s1 < s2) {
            continue;
        }
        let start = i.saturating_sub(2).min(n - 5);
        let window = &rows[start..start + 5];
        let h = rows[1].eps - rows[0].eps;
        let Some(signed) = window.iter().map(|r| r.signed()).collect::<Option<Vec<f64>>>() else {
            out.note(format!("local minimum at eps = {} has failed neighbours; skipped", rows[i].eps));
            continue;
        };
        let t: Vec<f64> = window.iter().map(|r| (r.eps - rows[i].eps) / h).collect();
        let Some((a, b, c)) = fit_quadratic(&t, &signed) else { continue };
        let Some(root) = nearest_root(a, b, c, 2.5) else {
            out.note(format!(
                "local minimum of sigma_min at eps = {} without a sign change of the signed eigenvalue (not a degenerate point)",
                rows[i].eps
            ));
            continue;
        };
        let fitted = rows[i].eps + root * h;
        // bracket from the adjacent pair of rows whose signed values change sign
        let pair = (0..4)
            .filter(|&k| signed[k] * signed[k + 1] <= 0.0)
            .min_by(|&x, &y| (window[x].eps - fitted).abs().total_cmp(&(window[y].eps - fitted).abs()));
        let Some(k) = pair else {
            out.note(format!("dip near eps = {fitted} has no sign-change bracket; not refined"));
            continue;
        };
        let seed = &window[k].solved.as_ref().expect("checked above").0;
        let (refined, report) = if signed[k] == 0.0 {
            (window[k].eps, window[k].solved.as_ref().expect("checked").1.clone())
        } else if signed[k + 1] == 0.0 {
            (window[k + 1].eps, window[k + 1].solved.as_ref().expect("checked").1.clone())
        } else {
            refine_root(seed, cfg, (window[k].eps, signed[k]), (window[k + 1].eps, signed[k + 1]))?
        };
        dips.push(Dip {
            index: i,
            fitted,
            refined,
            kernel_dim: kernel_dim(&report),
            relative_sigma: report.relative_sigma_min(),
        });
    }
    Ok(dips)
}

/// `sigma_min` along the sweep on the chosen branch, with dips located and
/// compared against the constant-branch criterion.
pub fn sweep_epsilon(
    cfg: &RunConfig,
    [eps_min, eps_max, eps_step]: [f64; 3],
    nu: f64,
    branch: Branch,
    init: &[ModeConfig],
    j_max: usize,
) -> LabResult<Outcome> {
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;
    let torus = cfg.torus()?;
    let grid = grid(eps_min, eps_max, eps_step)?;
    let rows = match branch {
        Branch::Constant => constant_rows(&grid, &torus, &pot, nu, cfg),
        Branch::Continued => continued_rows(&grid, &torus, &pot, nu, init, cfg, &mut out)?,
    };
    let manifold = Manifold::Torus(torus.clone());
    let levels = criterion_levels(&pot, nu, &manifold, j_max, eps_min)?;
    let upper = eps_max;
    let in_range: Vec<(f64, usize)> = levels.iter().copied().filter(|&(e, _)| e >= eps_min && e <= upper).collect();

    let metric_hash = cfg.metric_hash();
    let mut table = Table::new("sweep", &["eps", "lambda", "residual", "sigma_min", "class"]);
    let mut detail = Table::new(
        "sweep_detail",
        &[
            "eps", "nu", "metric_hash", "tol", "tau", "signed_mu", "sigma_max", "kernel_dim", "mass_error",
            "iterations", "negative_count", "error",
        ],
    );
    let mut failures = 0;
    let mut worst_residual = 0.0f64;
    let mut worst_mass = 0.0f64;
    for r in &rows {
        let neg = r.negative.map(Cell::from).unwrap_or_else(|| Cell::from(""));
        match &r.solved {
            Ok((s, rep)) => {
                worst_residual = worst_residual.max(s.residual);
                worst_mass = worst_mass.max(s.mass_error);
                table.push(vec![
                    r.eps.into(),
                    s.lambda.into(),
                    s.residual.into(),
                    rep.sigma_min.into(),
                    rep.classification.label().into(),
                ]);
                detail.push(vec![
                    r.eps.into(),
                    nu.into(),
                    metric_hash.clone().into(),
                    cfg.solver.tol.into(),
                    cfg.solver.tau.into(),
                    rep.signed.first().copied().unwrap_or(f64::NAN).into(),
                    rep.sigma_max.into(),
                    kernel_dim(rep).into(),
                    s.mass_error.into(),
                    s.iterations.into(),
                    neg,
                    "".into(),
                ]);
            }
            Err(e) => {
                failures += 1;
                table.push(vec![r.eps.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), "failed".into()]);
                detail.push(vec![
                    r.eps.into(),
                    nu.into(),
                    metric_hash.clone().into(),
                    cfg.solver.tol.into(),
                    cfg.solver.tau.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    Cell::from(""),
                    f64::NAN.into(),
                    Cell::from(""),
                    neg,
                    e.clone().into(),
                ]);
            }
        }
    }
    out.tables.push(table);
    out.tables.push(detail);

    let dips = locate_dips(&rows, cfg, &mut out)?;
    let mut dip_table = Table::new(
        "dips",
        &["eps_fitted", "eps_refined", "kernel_dim", "relative_sigma_at_root", "predicted_eps", "multiplicity", "relative_error"],
    );
    let all_constant = rows
        .iter()
        .all(|r| r.solved.as_ref().map(|(s, _)| spread(&s.u) <= 1e-10).unwrap_or(true));
    let nearest = |x: f64| {
        in_range
            .iter()
            .copied()
            .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
    };
    for d in &dips {
        let (pe, pm) = nearest(d.fitted).unwrap_or((f64::NAN, 0));
        dip_table.push(vec![
            d.fitted.into(),
            d.refined.into(),
            d.kernel_dim.into(),
            d.relative_sigma.into(),
            pe.into(),
            pm.into(),
            ((d.fitted - pe).abs() / pe).into(),
        ]);
    }
    out.tables.push(dip_table);
    out.set(
        "predicted",
        in_range
            .iter()
            .map(|&(e, m)| json!({"eps": e, "multiplicity": m}))
            .collect::<Vec<_>>(),
    );
    out.set(
        "criterion_levels",
        levels
            .iter()
            .take(j_max)
            .map(|&(e, m)| json!({"eps": e, "multiplicity": m}))
            .collect::<Vec<_>>(),
    );
    out.set(
        "dips",
        dips.iter()
            .map(|d| {
                json!({"eps_fitted": d.fitted, "eps_refined": d.refined, "kernel_dim": d.kernel_dim,
                       "grid_index": d.index, "relative_sigma_at_root": d.relative_sigma})
            })
            .collect::<Vec<_>>(),
    );
    out.set("rows", rows.len());
    out.set("failed_rows", failures);

    out.check("rows_solved", failures == 0, format!("{failures} of {} rows failed", rows.len()));
    let tol = cfg.solver.tol;
    out.check(
        "level_set_residuals",
        worst_residual <= tol && worst_mass <= tol,
        format!("worst primed residual {worst_residual:e}, worst mass error {worst_mass:e} (tol {tol:e})"),
    );
    if all_constant {
        // each prediction needs its own dip and vice versa
        let mut matched = vec![false; in_range.len()];
        let mut worst = 0.0f64;
        let mut ok = dips.len() == in_range.len();
        let mut kernel_ok = true;
        let mut kernel_detail = Vec::new();
        for d in &dips {
            match in_range
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 .0 - d.fitted).abs().total_cmp(&(b.1 .0 - d.fitted).abs()))
            {
                Some((j, &(pe, pm))) => {
                    let rel = (d.fitted - pe).abs() / pe;
                    worst = worst.max(rel);
                    ok &= rel <= DIP_TOL && !matched[j];
                    matched[j] = true;
                    kernel_ok &= d.kernel_dim == pm;
                    kernel_detail.push(format!("eps {pe:.6}: kernel {} vs multiplicity {pm}", d.kernel_dim));
                }
                None => ok = false,
            }
        }
        out.check(
            "dips_match_predictions",
            ok,
            format!(
                "{} dips for {} predictions in range; worst relative location error {worst:e} (tol {DIP_TOL:e})",
                dips.len(),
                in_range.len()
            ),
        );
        out.check(
            "kernel_dimension_at_dips",
            kernel_ok,
            if kernel_detail.is_empty() { "no dips".to_string() } else { kernel_detail.join("; ") },
        );
    } else {
        out.note("branch is nonconstant: criterion predictions apply to the constant branch only and are not checked");
    }
    let sigmas: Vec<f64> = rows.iter().filter_map(|r| r.sigma()).collect();
    let (continuous, worst_jump) = continuity(&sigmas);
    out.check(
        "sigma_min_continuity",
        continuous,
        format!("largest jump-to-neighbour-slope ratio {worst_jump:.3} (limit 10)"),
    );
    Ok(out)
}

/// Adjacent-row jumps against ten times the neighbouring jumps; returns the
/// verdict and the worst ratio.
fn continuity(s: &[f64]) -> (bool, f64) {
    let jumps: Vec<f64> = s.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mut worst = 0.0f64;
    for i in 0..jumps.len() {
        let left = if i > 0 { jumps[i - 1] } else { 0.0 };
        let right = jumps.get(i + 1).copied().unwrap_or(0.0);
        let local = left.max(right);
        if local == 0.0 && jumps.len() == 1 {
            continue;
        }
        let ratio = jumps[i] / (local + 1e-12);
        worst = worst.max(ratio);
    }
    (worst <= 10.0, worst)
}
