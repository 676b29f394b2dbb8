//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use cahn_core::degeneracy::{cokernel_check, constant_field, hessian_correspondence, min_singular, DegeneracyOptions};
use cahn_core::operators::Problem;
use cahn_core::solver::{newton_solve, SolveOptions, Solution};
use cahn_core::{Field, Mode, Potential, Torus};
use cahn_lab::{emit_report, execute, Format, RunRecord};

const EPS1: f64 = 1.0 / (2.0 * PI);
const SWEEP_BUDGET: f64 = 60.0;
const PROBE_BUDGET: f64 = 600.0;
const Q_RESIDUAL_TOL: f64 = 1e-8;
const ANGLE_TOL: f64 = 1e-8;

type Verdict = Result<String, String>;

fn checks_pass(record: &RunRecord, names: &[&str]) -> Verdict {
    let mut details = Vec::new();
    for name in names {
        let c = record
            .checks
            .iter()
            .find(|c| c.name == *name)
            .ok_or_else(|| format!("check `{name}` missing from the {} record", record.command))?;
        if !c.passed {
            return Err(format!("{name}: {}", c.detail));
        }
        details.push(format!("{name}: {}", c.detail));
    }
    Ok(details.join("; "))
}

fn run(command: &str) -> Result<(RunRecord, f64), String> {
    let start = Instant::now();
    let record = execute(command, None, None).map_err(|e| format!("{command}: {e}"))?;
    Ok((record, start.elapsed().as_secs_f64()))
}

fn flat_problem(eps: f64, n: usize) -> Result<Problem<f64>, String> {
    let torus = Torus::flat(2, n).map_err(|e| e.to_string())?;
    Problem::new(eps, torus, Potential::double_well()).map_err(|e| e.to_string())
}

fn striped_solution() -> Result<Solution<f64>, String> {
    let problem = flat_problem(0.9 * EPS1, 32)?;
    let grid = problem.torus.grid().clone();
    let init = Field::from_modes(&grid, &[Mode::cos([1, 0, 0], 0.5)]).map_err(|e| e.to_string())?;
    newton_solve(&problem, 0.0, (&init, 0.0), &SolveOptions::default()).map_err(|e| e.to_string())
}

fn criterion_reproduction() -> Verdict {
    let (record, secs) = run("sweep")?;
    let detail = checks_pass(&record, &["dips_match_predictions", "kernel_dimension_at_dips"])?;
    if secs > SWEEP_BUDGET {
        return Err(format!("sweep took {secs:.1} s (budget {SWEEP_BUDGET} s)"));
    }
    Ok(format!("{detail}; {secs:.1} s"))
}

fn operator_identity() -> Verdict {
    let (record, _) = run("check-calculus")?;
    checks_pass(&record, &["adjoint_flat", "adjoint_conformal"])
}

fn derivative_formulas() -> Verdict {
    let (record, _) = run("check-calculus")?;
    checks_pass(
        &record,
        &[
            "fd_dE",
            "fd_dE_conformal",
            "fd_dA",
            "fd_dB",
            "fd_dF",
            "b_term_vanishes_for_h_equal_g",
            "eta_only_matches_dirichlet_form",
        ],
    )
}

fn level_set_and_hessian() -> Verdict {
    let (solve, _) = run("solve")?;
    let mut detail = vec![checks_pass(&solve, &["level_set_residual", "mass_error"])?];
    let (sweep, _) = run("sweep")?;
    detail.push(checks_pass(&sweep, &["level_set_residuals"])?);
    let stripe = striped_solution()?;
    if stripe.residual > 1e-10 || stripe.mass_error > 1e-10 {
        return Err(format!("striped solve residual {:e}, mass error {:e}", stripe.residual, stripe.mass_error));
    }
    let problem = flat_problem(EPS1, 16)?;
    let (u, _) = constant_field(&problem.potential, 0.0, &problem.torus);
    let r = hessian_correspondence(&problem, &u, &DegeneracyOptions::default()).map_err(|e| e.to_string())?;
    if r.kernel_dimension != r.hessian_dimension || r.kernel_dimension == 0 || r.max_angle > ANGLE_TOL {
        return Err(format!(
            "kernel {} vs Hessian kernel {}, angle {:e}",
            r.kernel_dimension, r.hessian_dimension, r.max_angle
        ));
    }
    detail.push(format!(
        "eps1 constant: kernel {} = Hessian kernel {}, angle {:e}",
        r.kernel_dimension, r.hessian_dimension, r.max_angle
    ));
    Ok(detail.join("; "))
}

fn cokernel_characterization() -> Verdict {
    let opts = DegeneracyOptions::default();
    let mut detail = Vec::new();
    let mut cases = Vec::new();
    for (label, eps, expected) in [("nondegenerate constant", 0.15, Some(0)), ("eps1 constant", EPS1, Some(4))] {
        let problem = flat_problem(eps, 16)?;
        let (u, l) = constant_field(&problem.potential, 0.0, &problem.torus);
        cases.push((label, problem, u, l, expected));
    }
    let stripe = striped_solution()?;
    cases.push(("striped solution", stripe.problem.clone(), stripe.u.clone(), stripe.lambda, None));
    for (label, problem, u, lambda, expected) in cases {
        let c = cokernel_check(&problem, &u, lambda, &opts).map_err(|e| format!("{label}: {e}"))?;
        let kernel = min_singular(&problem, &u, &opts).map_err(|e| e.to_string())?.kernel.len();
        let dim_ok = match expected {
            Some(k) => c.dimension == k,
            None => c.dimension >= 1,
        };
        let line = format!(
            "{label}: cokernel {} / kernel {kernel}, residual {:e}",
            c.dimension, c.max_residual
        );
        if !dim_ok || !c.dimensions_agree() || c.dimension != kernel || c.max_residual > Q_RESIDUAL_TOL {
            return Err(line);
        }
        detail.push(line);
    }
    Ok(detail.join("; "))
}

fn genericity_probe() -> Verdict {
    let (record, secs) = run("probe-generic")?;
    let detail = checks_pass(
        &record,
        &[
            "samples_completed",
            "density",
            "openness",
            "striped_solution_found",
            "symmetry_degeneracy",
            "symmetry_breaking",
        ],
    )?;
    if secs > PROBE_BUDGET {
        return Err(format!("probe took {secs:.1} s (budget {PROBE_BUDGET} s)"));
    }
    Ok(format!("{detail}; {secs:.1} s"))
}

fn independent_oracle() -> Verdict {
    let (record, _) = run("oracle1d")?;
    checks_pass(&record, &["torus_agreement"])
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut docs = Vec::new();
    for (i, threads) in [1usize, 4].into_iter().enumerate() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let record = pool
            .install(|| execute("check-calculus", None, Some(7)))
            .map_err(|e| e.to_string())?;
        let out = dir.path().join(i.to_string());
        emit_report(&record, &out, &[Format::Doc]).map_err(|e| e.to_string())?;
        docs.push(fs::read(out.join("result.json")).map_err(|e| e.to_string())?);
    }
    if docs[0] != docs[1] {
        return Err("result.json differs between a 1-thread and a 4-thread run".into());
    }
    Ok(format!("seeded check-calculus on 1 and 4 threads: identical {} byte documents", docs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("criterion reproduction", criterion_reproduction),
        ("operator identity", operator_identity),
        ("derivative formulas", derivative_formulas),
        ("level-set and Hessian correspondence", level_set_and_hessian),
        ("cokernel characterization", cokernel_characterization),
        ("genericity probe", genericity_probe),
        ("independent oracle", independent_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
