use std::sync::Arc;

use cahn_core::operators::{
    apply_a, b_tensor, da_direction, de_direction, energy_along, energy_e, perturbed_torus, MetricDirection, Problem,
};
use cahn_core::potential::{nemytskii_b, nemytskii_db};
use cahn_core::{Field, Mode, Potential, Torus, TorusGrid, TorusMetric};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{potential, task_rng};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::record::{Outcome, Table};

/// Finite-difference steps; the pass criterion reads the last one.
pub const STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const FD_TOL: f64 = 1e-6;
/// Smallest error ratio over one decade of `h` accepted as second order (`10^1.5`).
pub const ORDER_RATIO: f64 = 31.622776601683793;
/// Errors below this are at the rounding floor and carry no order information.
const ROUNDING_FLOOR: f64 = 1e-10;
pub const ADJOINT_TOL_FLAT: f64 = 1e-11;
pub const ADJOINT_TOL_CONFORMAL: f64 = 1e-9;

const FORMULAS: [&str; 5] = ["dE", "dE_conformal", "dA", "dB", "dF"];

/// Random smooth field with modes `|k_i| <= 3`.
fn random_field(grid: &Arc<TorusGrid<f64>>, rng: &mut ChaCha8Rng, scale: f64) -> Field<f64> {
    let d = grid.dim();
    let mut modes = Vec::new();
    for _ in 0..8 {
        let mut k = [0i64; 3];
        for x in k.iter_mut().take(d) {
            *x = rng.random_range(-3..=3);
        }
        let k2: i64 = k.iter().map(|x| x * x).sum();
        modes.push(Mode {
            wavevector: k,
            amplitude: scale * rng.random_range(-1.0..1.0) / (1.0 + k2 as f64),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }
    Field::from_modes(grid, &modes).expect("modes fit the band")
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut g = DMatrix::identity(d, d);
    for i in 0..d {
        g[(i, i)] += rng.random_range(-0.3..0.3);
        for j in 0..i {
            let x = rng.random_range(-0.2..0.2) / (d as f64 - 1.0);
            g[(i, j)] = x;
            g[(j, i)] = x;
        }
    }
    g
}

fn random_symmetric(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn basis_pair(f: &Field<f64>, s: f64) -> DVector<f64> {
    let b = f.to_basis();
    DVector::from_iterator(b.len() + 1, b.iter().copied().chain(std::iter::once(s)))
}

/// Relative finite-difference errors `[formula][step]` for one sample.
struct Sample {
    errors: [[f64; 3]; 5],
    b_term: f64,
    h_equals_g: f64,
    eta_only: f64,
}

fn sample(grid: &Arc<TorusGrid<f64>>, pot: &Potential<f64>, rng: &mut ChaCha8Rng) -> LabResult<Sample> {
    let d = grid.dim();
    let eps = rng.random_range(0.1..1.0);
    let g = random_spd(d, rng);
    let h = random_symmetric(d, rng);
    let eta = rng.random_range(-1.0..1.0);
    let u = random_field(grid, rng, 1.0);
    let v = random_field(grid, rng, 1.0);
    let lambda = rng.random_range(-1.0..1.0);
    let big_lambda = rng.random_range(-1.0..1.0);
    let flat = Torus::new(grid.clone(), TorusMetric::constant(g.clone()))?;
    let conformal = d == 2;
    let curved = if conformal {
        flat.with_metric(TorusMetric::constant(g.clone()).with_phi(random_field(grid, rng, 0.2)))?
    } else {
        flat.clone()
    };
    let matrix_dir = MetricDirection::matrix(eta, h.clone());
    let full_dir = if conformal {
        matrix_dir.add(&MetricDirection::conformal(d, random_field(grid, rng, 1.0)))
    } else {
        matrix_dir.clone()
    };

    // scalar forms can vanish for near-orthogonal pairs, so they are measured
    // against sqrt(E(u, u) E(v, v)) rather than their own size
    let scale_flat = (energy_e(eps, &flat, &u, &u)? * energy_e(eps, &flat, &v, &v)?).sqrt();
    let scale_curved = (energy_e(eps, &curved, &u, &u)? * energy_e(eps, &curved, &v, &v)?).sqrt();
    let mut errors = [[0.0; 3]; 5];
    let exact_de = de_direction(eps, &flat, &matrix_dir, &u, &v)?;
    let exact_dec = de_direction(eps, &curved, &full_dir, &u, &v)?;
    let exact_da = da_direction(eps, &curved, &full_dir, &u)?.to_basis();
    let exact_db = nemytskii_db(&curved, pot, &u, &v, big_lambda)?.to_basis();
    let problem = Problem::new(eps, curved.clone(), pot.clone())?;
    let (df, dm) = problem.df_map(&u, lambda, &v, big_lambda)?;
    let exact_df = basis_pair(&df, dm);
    for (s, &step) in STEPS.iter().enumerate() {
        let central = |f: &dyn Fn(f64) -> LabResult<f64>| -> LabResult<f64> { Ok((f(step)? - f(-step)?) / (2.0 * step)) };
        let central_vec = |f: &dyn Fn(f64) -> LabResult<DVector<f64>>| -> LabResult<DVector<f64>> {
            Ok((f(step)? - f(-step)?) / (2.0 * step))
        };
        let fd = central(&|t| Ok(energy_along(eps, &flat, &matrix_dir, t, &u, &v)?))?;
        errors[0][s] = rel((fd - exact_de).abs(), scale_flat);
        let fd = central(&|t| Ok(energy_along(eps, &curved, &full_dir, t, &u, &v)?))?;
        errors[1][s] = rel((fd - exact_dec).abs(), scale_curved);
        let fd = central_vec(&|t| {
            let tt = perturbed_torus(&curved, &full_dir, t)?;
            Ok(apply_a(eps + eta * t, &tt, &u)?.to_basis())
        })?;
        errors[2][s] = rel((fd - &exact_da).norm(), exact_da.norm());
        let fd = central_vec(&|t| Ok(nemytskii_b(&curved, pot, &u.axpy(t, &v), lambda + t * big_lambda)?.to_basis()))?;
        errors[3][s] = rel((fd - &exact_db).norm(), exact_db.norm());
        let fd = central_vec(&|t| {
            let (f, m) = problem.f_map(&u.axpy(t, &v), lambda + t * big_lambda)?;
            Ok(basis_pair(&f, m))
        })?;
        errors[4][s] = rel((fd - &exact_df).norm(), exact_df.norm());
    }

    // H = G: the Dirichlet variation vanishes in two dimensions
    let (b_term, h_equals_g) = if d == 2 {
        let b = b_tensor(&g, &g)?;
        let de = de_direction(eps, &flat, &MetricDirection::matrix(0.0, g.clone()), &u, &v)?;
        let c = u.to_basis();
        let w = v.to_basis();
        let l2 = c.dot(&flat.mass(&w));
        let norms = (c.dot(&flat.mass(&c)) * w.dot(&flat.mass(&w))).sqrt();
        (b.amax(), rel((de - l2).abs(), norms))
    } else {
        (0.0, 0.0)
    };
    // eta only: 2 eps eta int g(grad u, grad v)
    let dirichlet = (energy_e(2.0, &flat, &u, &v)? - energy_e(1.0, &flat, &u, &v)?) / 3.0;
    let de = de_direction(eps, &flat, &MetricDirection::eps_only(d, eta), &u, &v)?;
    let closed = 2.0 * eps * eta * dirichlet;
    let eta_only = rel((de - closed).abs(), scale_flat);
    Ok(Sample {
        errors,
        b_term,
        h_equals_g,
        eta_only,
    })
}

/// `|E(A f, v) - int f v dmu_g| / (|f| |v|)` for one random pair.
fn adjoint_error(torus: &Torus<f64>, eps: f64, rng: &mut ChaCha8Rng) -> LabResult<f64> {
    let f = random_field(torus.grid(), rng, 1.0);
    let v = random_field(torus.grid(), rng, 1.0);
    let af = apply_a(eps, torus, &f)?;
    let lhs = energy_e(eps, torus, &af, &v)?;
    let rhs = f.to_basis().dot(&torus.mass(&v.to_basis()));
    Ok((lhs - rhs).abs() / (f.l2_norm() * v.l2_norm()))
}

/// Finite-difference verification of the derivative formulas and the
/// self-adjointness identity of `A`.
pub fn check_calculus(cfg: &RunConfig, samples: usize, seed: u64, pairs: usize) -> LabResult<Outcome> {
    let mut out = Outcome::default();
    if samples == 0 {
        return Err(LabError::Config("check-calculus needs at least one sample".into()));
    }
    let pot = potential(cfg, &mut out)?;
    let d = cfg.manifold.d;
    let grid = TorusGrid::new(d, cfg.manifold.n)?;
    let results: Vec<LabResult<Sample>> = (0..samples)
        .into_par_iter()
        .map(|i| sample(&grid, &pot, &mut task_rng(seed, i as u64)))
        .collect();
    let results: Vec<Sample> = results.into_iter().collect::<LabResult<_>>()?;

    let mut t = Table::new(
        "calculus",
        &["formula", "worst_h1e-2", "worst_h1e-3", "worst_h1e-4", "min_order_ratio", "passed"],
    );
    let mut all = true;
    for (f, name) in FORMULAS.iter().enumerate() {
        if *name == "dE_conformal" && d != 2 {
            continue;
        }
        let worst: Vec<f64> = (0..3)
            .map(|s| results.iter().map(|r| r.errors[f][s]).fold(0.0, f64::max))
            .collect();
        // order from the two coarser steps, where truncation dominates rounding
        let ratio = results
            .iter()
            .filter(|r| r.errors[f][1] > ROUNDING_FLOOR)
            .map(|r| r.errors[f][0] / r.errors[f][1])
            .fold(f64::INFINITY, f64::min);
        let passed = worst[2] <= FD_TOL && ratio >= ORDER_RATIO;
        all &= passed;
        t.push(vec![
            (*name).into(),
            worst[0].into(),
            worst[1].into(),
            worst[2].into(),
            ratio.into(),
            passed.into(),
        ]);
        out.check(
            &format!("fd_{name}"),
            passed,
            format!("worst relative error {:e} at h = 1e-4 (tol {FD_TOL:e}); min error ratio per decade {ratio:.3} (>= {ORDER_RATIO:.2})", worst[2]),
        );
    }
    out.tables.push(t);
    out.set("all_formulas_pass", all);
    out.set("samples", samples);

    let b_term = results.iter().map(|r| r.b_term).fold(0.0, f64::max);
    let h_equals_g = results.iter().map(|r| r.h_equals_g).fold(0.0, f64::max);
    let eta_only = results.iter().map(|r| r.eta_only).fold(0.0, f64::max);
    if d == 2 {
        out.check(
            "b_term_vanishes_for_h_equal_g",
            b_term <= 1e-14 && h_equals_g <= 1e-12,
            format!("max |b_(g,g)| = {b_term:e}; dE[0, G] vs int u v: {h_equals_g:e} relative to |u| |v|"),
        );
    }
    out.check(
        "eta_only_matches_dirichlet_form",
        eta_only <= 1e-10,
        format!("deviation from 2 eps eta int g(grad u, grad v): {eta_only:e} relative to sqrt(E(u,u) E(v,v))"),
    );

    // self-adjointness of A in the energy product
    let mut adj = Table::new("adjoint", &["case", "pairs", "worst", "tolerance", "passed"]);
    let mut cases = vec![("flat", ADJOINT_TOL_FLAT)];
    if d == 2 {
        cases.push(("conformal", ADJOINT_TOL_CONFORMAL));
    }
    for (c, (case, tol)) in cases.into_iter().enumerate() {
        let errors: Vec<LabResult<f64>> = (0..pairs)
            .into_par_iter()
            .map(|i| {
                let mut rng = task_rng(seed, (1 << 32) + (c as u64) * (1 << 20) + i as u64);
                let eps = rng.random_range(0.1..1.0);
                let g = random_spd(d, &mut rng);
                let mut metric = TorusMetric::constant(g);
                if case == "conformal" {
                    metric = metric.with_phi(random_field(&grid, &mut rng, 0.2));
                }
                let torus = Torus::new(grid.clone(), metric)?;
                adjoint_error(&torus, eps, &mut rng)
            })
            .collect();
        let worst = errors.into_iter().collect::<LabResult<Vec<f64>>>()?.into_iter().fold(0.0, f64::max);
        let passed = worst <= tol;
        adj.push(vec![case.into(), pairs.into(), worst.into(), tol.into(), passed.into()]);
        out.check(
            &format!("adjoint_{case}"),
            passed,
            format!("worst |E(Af, v) - int f v| / (|f| |v|) = {worst:e} over {pairs} pairs (tol {tol:e})"),
        );
    }
    out.tables.push(adj);
    Ok(out)
}
