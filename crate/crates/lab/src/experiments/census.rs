use cahn_core::degeneracy::{morse_lower_bound, DegeneracyReport};
use cahn_core::operators::Problem;
use cahn_core::solver::{gradient_flow, newton_solve, FlowOptions, Solution};
use cahn_core::{Field, Manifold, Mode, Torus};
use rand::Rng;
use rayon::prelude::*;

use super::{analyze, field_rows, fmt_k, kernel_dim, oracle_match, potential, spread, stripe_direction, task_rng, OracleMatch};
use crate::align::align;
use crate::config::{ExperimentConfig, RunConfig};
use crate::error::{LabError, LabResult};
use crate::oracle::MIN_MESH;
use crate::record::{Cell, Outcome, Table};

/// Random start `nu / vol + a * sum c_k cos(2 pi k.x + phase)` over `|k_i| <= 2`,
/// scaled to sup-norm `a`. Start 0 is the constant itself.
fn random_start(torus: &Torus<f64>, nu: f64, amplitude: f64, seed: u64, index: usize) -> LabResult<Field<f64>> {
    let grid = torus.grid();
    let c = Field::constant(grid, nu / torus.volume());
    if index == 0 {
        return Ok(c);
    }
    let mut rng = task_rng(seed, index as u64);
    let d = torus.dim();
    let mut modes = Vec::new();
    for _ in 0..6 {
        let mut k = [0i64; 3];
        while k.iter().all(|&x| x == 0) {
            for x in k.iter_mut().take(d) {
                *x = rng.random_range(-2..=2);
            }
        }
        modes.push(Mode {
            wavevector: k,
            amplitude: rng.random_range(-1.0..1.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }
    let p = Field::from_modes(grid, &modes)?;
    let scale = p.max_abs();
    Ok(if scale > 0.0 { c.axpy(amplitude / scale, &p) } else { c })
}

/// Fields closer than this (sup-norm spread) to a constant are not counted
/// as 2D patterns: at a degenerate constant Newton creeps along the kernel
/// and stops within tolerance but visibly off the constant.
const NEAR_CONSTANT: f64 = 1e-2;

struct Found {
    solution: Solution<f64>,
    j: f64,
}

struct Distinct {
    found: Found,
    starts: Vec<usize>,
    report: Result<DegeneracyReport<f64>, String>,
    kind: String,
    oracle: Option<Result<OracleMatch, String>>,
}

/// Multistart search (gradient flow then Newton on even starts, Newton
/// alone on odd ones) with translation-aware deduplication.
pub fn census(cfg: &RunConfig, seed: u64) -> LabResult<Outcome> {
    let ExperimentConfig::Census {
        eps,
        nu,
        starts,
        amplitude,
        dedup_tol,
        n,
        ..
    } = cfg.experiment().clone()
    else {
        unreachable!("dispatched on kind")
    };
    if starts == 0 {
        return Err(LabError::Config("census needs at least one start".into()));
    }
    let mut out = Outcome::default();
    let pot = potential(cfg, &mut out)?;
    let torus = cfg.torus_with_n(n)?;
    let problem = Problem::new(eps, torus.clone(), pot.clone())?;
    let flow = FlowOptions {
        steps: cfg.solver.flow_steps,
        dt: cfg.solver.flow_dt,
        max_halvings: cfg.solver.max_halvings,
    };

    let runs: Vec<Result<Found, String>> = (0..starts)
        .into_par_iter()
        .map(|i| {
            (|| -> LabResult<Found> {
                let init = random_start(&torus, nu, amplitude, seed, i)?;
                let (u0, l0) = if i % 2 == 0 && i > 0 {
                    let f = gradient_flow(&problem, nu, &init, &flow)?;
                    (f.field, f.lambda)
                } else {
                    let l = pot.dw(nu / torus.volume());
                    (init, l)
                };
                let solution = newton_solve(&problem, nu, (&u0, l0), &cfg.solve_options())?;
                let j = solution.j_value()?;
                Ok(Found { solution, j })
            })()
            .map_err(|e| e.to_string())
        })
        .collect();

    let mut starts_table = Table::new("starts", &["start", "method", "outcome", "solution"]);
    let mut distinct: Vec<Distinct> = Vec::new();
    let mut failed = 0;
    for (i, r) in runs.into_iter().enumerate() {
        let method = if i % 2 == 0 && i > 0 { "flow+newton" } else { "newton" };
        match r {
            Ok(f) => {
                let same = distinct.iter().position(|d| {
                    let a = &d.found;
                    (a.solution.lambda - f.solution.lambda).abs() <= dedup_tol
                        && (a.j - f.j).abs() <= dedup_tol
                        && align(&a.solution.u, &f.solution.u).1 <= dedup_tol
                });
                let idx = match same {
                    Some(k) => {
                        distinct[k].starts.push(i);
                        k
                    }
                    None => {
                        distinct.push(Distinct {
                            found: f,
                            starts: vec![i],
                            report: Err(String::new()),
                            kind: String::new(),
                            oracle: None,
                        });
                        distinct.len() - 1
                    }
                };
                starts_table.push(vec![i.into(), method.into(), "converged".into(), idx.into()]);
            }
            Err(e) => {
                failed += 1;
                starts_table.push(vec![i.into(), method.into(), e.into(), Cell::from("")]);
            }
        }
    }

    let d = torus.dim();
    let analyzed: Vec<(Result<DegeneracyReport<f64>, String>, String, Option<Result<OracleMatch, String>>)> = distinct
        .par_iter()
        .map(|x| {
            let s = &x.found.solution;
            let report = analyze(&s.problem, &s.u, cfg).map_err(|e| e.to_string());
            if spread(&s.u) <= 1e-10 {
                return (report, "constant".to_string(), None);
            }
            if spread(&s.u) <= NEAR_CONSTANT {
                return (report, "near-constant".to_string(), None);
            }
            match stripe_direction(&s.u) {
                Some(k) if torus.has_constant_metric() => (
                    report,
                    format!("stripe {}", fmt_k(k, d)),
                    Some(oracle_match(s, k, MIN_MESH).map_err(|e| e.to_string())),
                ),
                Some(k) => (report, format!("stripe {}", fmt_k(k, d)), None),
                None => (report, "genuinely 2D".to_string(), None),
            }
        })
        .collect();
    for (x, (report, kind, oracle)) in distinct.iter_mut().zip(analyzed) {
        x.report = report;
        x.kind = kind;
        x.oracle = oracle;
    }

    let mut table = Table::new(
        "census",
        &[
            "solution", "starts", "lambda", "J", "residual", "mass_error", "sigma_min", "relative_sigma_min", "class",
            "kernel_dim", "kind", "oracle_lambda_diff", "oracle_distance",
        ],
    );
    let mut fields = Table::new("census_fields", &["solution", "i", "j", "u"]);
    let mut degenerate = 0;
    let mut oracle_ok = true;
    let mut oracle_detail = Vec::new();
    let mut worst_residual = 0.0f64;
    let mut worst_mass = 0.0f64;
    for (k, x) in distinct.iter().enumerate() {
        let s = &x.found.solution;
        worst_residual = worst_residual.max(s.residual);
        worst_mass = worst_mass.max(s.mass_error);
        let starts: Vec<String> = x.starts.iter().map(|i| i.to_string()).collect();
        let (sigma, rel, class, kdim) = match &x.report {
            Ok(r) => {
                if r.classification.is_degenerate() {
                    degenerate += 1;
                }
                (
                    Cell::from(r.sigma_min),
                    Cell::from(r.relative_sigma_min()),
                    Cell::from(r.classification.label()),
                    Cell::from(kernel_dim(r)),
                )
            }
            Err(e) => (f64::NAN.into(), f64::NAN.into(), format!("failed: {e}").into(), Cell::from("")),
        };
        let (ld, od) = match &x.oracle {
            Some(Ok(m)) => {
                oracle_ok &= m.agrees();
                oracle_detail.push(format!(
                    "solution {k} ({}): |dlambda| {:e}, distance {:e}",
                    x.kind, m.lambda_diff, m.distance
                ));
                (Cell::from(m.lambda_diff), Cell::from(m.distance))
            }
            Some(Err(e)) => {
                oracle_ok = false;
                oracle_detail.push(format!("solution {k} ({}): oracle failed: {e}", x.kind));
                (Cell::from(f64::NAN), Cell::from(f64::NAN))
            }
            None => ("".into(), "".into()),
        };
        table.push(vec![
            k.into(),
            starts.join(" ").into(),
            s.lambda.into(),
            x.found.j.into(),
            s.residual.into(),
            s.mass_error.into(),
            sigma,
            rel,
            class,
            kdim,
            x.kind.clone().into(),
            ld,
            od,
        ]);
        for (i, j, v) in field_rows(&s.u) {
            fields.push(vec![k.into(), i.into(), j.into(), v.into()]);
        }
    }
    out.tables.push(table);
    out.tables.push(starts_table);
    if !fields.rows.is_empty() {
        out.tables.push(fields);
    }

    let bound = morse_lower_bound(&Manifold::Torus(torus.clone()));
    out.set("distinct_solutions", distinct.len());
    out.set("morse_lower_bound", bound);
    out.set("failed_starts", failed);
    out.set("degenerate_solutions", degenerate);
    out.set(
        "statement",
        if degenerate == 0 {
            format!("no degenerate solution found among {} computed", distinct.len())
        } else {
            format!(
                "{degenerate} of {} computed solutions are degenerate (nonconstant solutions on a flat torus carry translation kernels)",
                distinct.len()
            )
        },
    );
    out.note(format!(
        "{} distinct solutions found from {starts} starts; Morse lower bound P(1) = {bound} (informational, no pass/fail)",
        distinct.len()
    ));
    let tol = cfg.solver.tol;
    out.check(
        "level_set_residuals",
        worst_residual <= tol && worst_mass <= tol,
        format!("worst primed residual {worst_residual:e}, worst mass error {worst_mass:e} (tol {tol:e})"),
    );
    out.check(
        "cross_oracle",
        oracle_ok,
        if oracle_detail.is_empty() { "no striped solutions".to_string() } else { oracle_detail.join("; ") },
    );
    Ok(out)
}
