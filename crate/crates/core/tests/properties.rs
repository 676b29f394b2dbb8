use cahn_core::degeneracy::{constant_field, degenerate_epsilons, min_singular, DegeneracyOptions};
use cahn_core::operators::{
    apply_a, da_direction, de_direction, energy_e, inner_h, integral, perturbed_torus, MetricDirection, Problem,
};
use cahn_core::potential::{nemytskii_db, Potential};
use cahn_core::solver::{newton_solve, SolveOptions};
use cahn_core::{Field, Manifold, Mode, Torus, TorusMetric};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

const N: usize = 16;

fn torus() -> Torus<f64> {
    Torus::flat(2, N).unwrap()
}

/// Band-limited random field from a handful of modes.
fn field_strategy() -> impl Strategy<Value = Vec<([i64; 3], f64, f64)>> {
    prop::collection::vec(((-4i64..=4, -4i64..=4), -1.0..1.0f64, 0.0..6.28f64), 1..6)
        .prop_map(|v| v.into_iter().map(|((a, b), amp, ph)| ([a, b, 0], amp, ph)).collect())
}

fn build(t: &Torus<f64>, spec: &[([i64; 3], f64, f64)]) -> Field<f64> {
    let modes: Vec<Mode<f64>> = spec
        .iter()
        .map(|&(k, a, p)| Mode {
            wavevector: k,
            amplitude: a,
            phase: p,
        })
        .collect();
    Field::from_modes(t.grid(), &modes).unwrap()
}

fn spd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (-0.2..0.2f64, -0.2..0.2f64, -0.1..0.1f64)
        .prop_map(|(a, b, c)| DMatrix::from_row_slice(2, 2, &[1.0 + a, c, c, 1.0 + b]))
}

fn sym_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| DMatrix::from_row_slice(2, 2, &[a, c, c, b]))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn potential_derivatives_converge_at_order_two(t in -3.0..3.0f64) {
        let w = Potential::<f64>::double_well();
        let fd = |f: &dyn Fn(f64) -> f64, h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
        let e1 = (fd(&|x| w.w(x), 1e-2) - w.dw(t)).abs();
        let e2 = (fd(&|x| w.w(x), 1e-3) - w.dw(t)).abs();
        // central differences of a polynomial: the error is exactly c h^2
        prop_assert!(e2 <= e1 / 50.0 + 1e-12);
        let e1 = (fd(&|x| w.dw(x), 1e-2) - w.d2w(t)).abs();
        let e2 = (fd(&|x| w.dw(x), 1e-3) - w.d2w(t)).abs();
        prop_assert!(e2 <= e1 / 50.0 + 1e-12);
    }

    #[test]
    fn nemytskii_db_is_linear(
        u in field_strategy(), v1 in field_strategy(), v2 in field_strategy(),
        l1 in -1.0..1.0f64, l2 in -1.0..1.0f64, a in -2.0..2.0f64, b in -2.0..2.0f64,
    ) {
        let t = torus();
        let w = Potential::double_well();
        let (u, v1, v2) = (build(&t, &u), build(&t, &v1), build(&t, &v2));
        let lhs = nemytskii_db(&t, &w, &u, &v1.scale(a).axpy(b, &v2), a * l1 + b * l2).unwrap();
        let rhs = nemytskii_db(&t, &w, &u, &v1, l1).unwrap().scale(a)
            .axpy(b, &nemytskii_db(&t, &w, &u, &v2, l2).unwrap());
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-12 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn inner_product_symmetry_and_norm_equivalence(
        u in field_strategy(), v in field_strategy(), g in spd_strategy(), eps in 0.05..3.0f64,
    ) {
        let t = torus().with_metric(TorusMetric::constant(g)).unwrap();
        let (u, v) = (build(&t, &u), build(&t, &v));
        let a = inner_h(&t, &u, &v).unwrap();
        let b = inner_h(&t, &v, &u).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        let h = inner_h(&t, &u, &u).unwrap();
        let e = energy_e(eps, &t, &u, &u).unwrap();
        let tol = 1e-12 * h;
        prop_assert!(eps.powi(2).min(1.0) * h <= e + tol && e <= eps.powi(2).max(1.0) * h + tol);
    }

    #[test]
    fn apply_a_is_self_adjoint(f in field_strategy(), h in field_strategy(), eps in 0.05..2.0f64) {
        let t = torus();
        let (f, h) = (build(&t, &f), build(&t, &h));
        let af = apply_a(eps, &t, &f).unwrap();
        let ah = apply_a(eps, &t, &h).unwrap();
        let scale = f.l2_norm() * h.l2_norm();
        let fh = integral(&t, &Field::from_padded(t.grid(), &f.padded().iter().zip(h.padded()).map(|(a, b)| a * b).collect::<Vec<_>>())).unwrap();
        prop_assert!((energy_e(eps, &t, &af, &h).unwrap() - fh).abs() <= 1e-11 * scale);
        let x = energy_e(eps, &t, &af, &ah).unwrap();
        let y = energy_e(eps, &t, &ah, &af).unwrap();
        prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
    }

    #[test]
    fn df_map_is_linear(
        u in field_strategy(), v1 in field_strategy(), v2 in field_strategy(),
        l1 in -1.0..1.0f64, l2 in -1.0..1.0f64, a in -2.0..2.0f64,
    ) {
        let p = Problem::new(0.2, torus(), Potential::double_well()).unwrap();
        let (u, v1, v2) = (build(&p.torus, &u), build(&p.torus, &v1), build(&p.torus, &v2));
        let (f, s) = p.df_map(&u, 0.0, &v1.scale(a).axpy(1.0, &v2), a * l1 + l2).unwrap();
        let (f1, s1) = p.df_map(&u, 0.0, &v1, l1).unwrap();
        let (f2, s2) = p.df_map(&u, 0.0, &v2, l2).unwrap();
        prop_assert!((&f - &f1.scale(a).axpy(1.0, &f2)).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
        prop_assert!((s - (a * s1 + s2)).abs() <= 1e-13);
    }

    #[test]
    fn de_and_da_are_linear_in_the_direction(
        u in field_strategy(), f in field_strategy(), h1 in sym_strategy(), h2 in sym_strategy(),
        e1 in -1.0..1.0f64, e2 in -1.0..1.0f64, a in -2.0..2.0f64,
    ) {
        let t = torus();
        let eps = 0.3;
        let (u, f) = (build(&t, &u), build(&t, &f));
        let d1 = MetricDirection::matrix(e1, h1);
        let d2 = MetricDirection::matrix(e2, h2);
        let mixed = d1.scale(a).add(&d2);
        let lhs = de_direction(eps, &t, &mixed, &u, &u).unwrap();
        let rhs = a * de_direction(eps, &t, &d1, &u, &u).unwrap() + de_direction(eps, &t, &d2, &u, &u).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        let lhs = da_direction(eps, &t, &mixed, &f).unwrap();
        let rhs = da_direction(eps, &t, &d1, &f).unwrap().scale(a).axpy(1.0, &da_direction(eps, &t, &d2, &f).unwrap());
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-11 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn de_matches_finite_differences_at_order_two(
        u in field_strategy(), v in field_strategy(), g in spd_strategy(), h in sym_strategy(), eta in -1.0..1.0f64,
    ) {
        let t = torus().with_metric(TorusMetric::constant(g)).unwrap();
        let eps = 0.4;
        let (u, v) = (build(&t, &u), build(&t, &v));
        let dir = MetricDirection::matrix(eta, h);
        let exact = de_direction(eps, &t, &dir, &u, &v).unwrap();
        let fd = |s: f64| {
            let e = |x: f64| {
                let tt = perturbed_torus(&t, &dir, x).unwrap();
                energy_e(eps + x * eta, &tt, &u, &v).unwrap()
            };
            (e(s) - e(-s)) / (2.0 * s)
        };
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&s| (fd(s) - exact).abs()).collect();
        prop_assert!(errs[2] <= 1e-6 * exact.abs().max(1.0), "{errs:?}");
        // order two until the rounding floor
        prop_assert!(errs[1] <= errs[0] / 30.0 + 1e-9 * exact.abs().max(1.0), "{errs:?}");
    }

    #[test]
    fn spectrum_scales_inversely_with_the_metric(c in 0.2..5.0f64) {
        let t = torus();
        let scaled = t.with_metric(TorusMetric::constant(DMatrix::identity(2, 2) * c)).unwrap();
        let a = t.laplacian_spectrum(5).unwrap();
        let b = scaled.laplacian_spectrum(5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel(x.value / c, y.value) <= 1e-14);
            prop_assert_eq!(x.multiplicity, y.multiplicity);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Classification at constants agrees with the closed-form criterion.
    #[test]
    fn criterion_equivalence_at_constants(nu in -0.5..0.5f64, j in 0usize..3, g in spd_strategy()) {
        let t = torus().with_metric(TorusMetric::constant(g)).unwrap();
        let w = Potential::double_well();
        let eps_list = degenerate_epsilons(&w, nu, &Manifold::Torus(t.clone()), 3).unwrap();
        let (eps_j, mult) = eps_list[j];
        let opts = DegeneracyOptions::default();
        let (u, _) = constant_field(&w, nu, &t);
        let at = min_singular(&Problem::new(eps_j, t.clone(), w.clone()).unwrap(), &u, &opts).unwrap();
        prop_assert_eq!(at.kernel.len(), mult);
        let predicted = at.predicted_eps.clone().unwrap();
        prop_assert!(rel(predicted[j].0, eps_j) <= 1e-14);
        for off in [-1e-3, 1e-3] {
            let r = min_singular(&Problem::new(eps_j * (1.0 + off), t.clone(), w.clone()).unwrap(), &u, &opts).unwrap();
            prop_assert!(!r.classification.is_degenerate());
        }
    }

    /// Solver outputs satisfy both halves of the level-set characterization.
    #[test]
    fn solver_outputs_lie_on_the_level_set(nu in -0.3..0.3f64, eps in 0.12..0.5f64, amp in 0.0..0.5f64) {
        let p = Problem::new(eps, torus(), Potential::double_well()).unwrap();
        let init = Field::from_modes(p.torus.grid(), &[Mode::cos([1, 0, 0], amp)]).unwrap().axpy(1.0, &Field::constant(p.torus.grid(), nu));
        let s = match newton_solve(&p, nu, (&init, 0.0), &SolveOptions::default()) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        prop_assert!(s.residual <= 1e-10 && s.mass_error <= 1e-10);
        prop_assert!(p.level_set_residual(&s.u, s.lambda, nu).unwrap() <= 1e-10);
        prop_assert!(s.strong_residual().unwrap() <= 1e-9);
        // and conversely: a perturbed pair leaves the level set
        let off = s.u.axpy(1e-6, &Field::from_modes(p.torus.grid(), &[Mode::cos([0, 1, 0], 1.0)]).unwrap());
        prop_assert!(p.level_set_residual(&off, s.lambda, nu).unwrap() > 1e-10);
    }
}

#[test]
fn weyl_counting_function_grows() {
    let t = torus();
    let levels = t.laplacian_spectrum(40).unwrap();
    let mut count = 0;
    let mut last = 0.0;
    for l in &levels {
        assert!(l.value > last);
        count += l.multiplicity;
        last = l.value;
    }
    // N(lambda) ~ lambda / (4 pi) for the unit torus
    let weyl = last / (4.0 * PI);
    assert!(count as f64 > 0.5 * weyl && (count as f64) < 2.0 * weyl);
}
