use super::*;
use crate::field::Mode;
use crate::linalg::principal_angles;
use crate::manifold::{Torus, TorusMetric};
use crate::potential::Potential;
use crate::solver::{newton_solve, SolveOptions};
use std::f64::consts::PI;

fn problem(eps: f64, n: usize) -> Problem<f64> {
    Problem::new(eps, Torus::flat(2, n).unwrap(), Potential::double_well()).unwrap()
}

fn striped(eps: f64, n: usize) -> (Problem<f64>, Field<f64>, f64) {
    let p = problem(eps, n);
    let init = Field::from_modes(p.torus.grid(), &[Mode::cos([1, 0, 0], 0.5)]).unwrap();
    let s = newton_solve(&p, 0.0, (&init, 0.0), &SolveOptions::default()).unwrap();
    assert!(s.u.max_abs() > 0.1);
    (p, s.u, s.lambda)
}

fn basis(vs: &[AugmentedVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_columns(&vs.iter().map(|v| v.to_vector()).collect::<Vec<_>>())
}

#[test]
fn linearized_examples() {
    let eps = 1.0 / (2.0 * PI);
    let p = problem(eps, 16);
    let g = p.torus.grid();
    let v = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos());
    let (f, t) = linearized_apply(&p, &Field::zeros(g), &v, 0.0).unwrap();
    assert!(f.max_abs() < 1e-13 && t.abs() < 1e-15);
    let u0 = 0.3;
    let c = 0.7;
    let (f, t) = linearized_apply(&p, &Field::constant(g, u0), &Field::constant(g, c), (3.0 * u0 * u0 - 1.0) * c).unwrap();
    assert!(f.max_abs() < 1e-14 && (t - c).abs() < 1e-15);
    let (f, t) = linearized_apply(&p, &Field::constant(g, u0), &Field::zeros(g), 1.0).unwrap();
    assert!(f.values().iter().all(|x| (x + 1.0).abs() < 1e-14) && t == 0.0);
}

#[test]
fn constant_between_criteria_is_nondegenerate() {
    let eps = 0.5 * (1.0 / (2.0 * PI * 2f64.sqrt()) + 1.0 / (2.0 * PI));
    let p = problem(eps, 16);
    let r = min_singular(&p, &Field::zeros(p.torus.grid()), &DegeneracyOptions::default()).unwrap();
    assert_eq!(r.classification, Classification::Nondegenerate);
    assert!(r.sigma_min > 1e-3);
    // modewise oracle: |eps^2 alpha - 1| / (eps^2 alpha + 1) is the singular value on mode alpha
    let expect = [4.0, 8.0, 16.0]
        .iter()
        .map(|m| {
            let a = m * PI * PI * eps * eps;
            (a - 1.0).abs() / (a + 1.0)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(r.sigma_min <= expect + 1e-12);
}

#[test]
fn constant_at_first_criterion_has_four_dimensional_kernel() {
    let eps = 1.0 / (2.0 * PI);
    let p = problem(eps, 16);
    let g = p.torus.grid();
    let r = min_singular(&p, &Field::zeros(g), &DegeneracyOptions::default()).unwrap();
    assert_eq!(r.classification, Classification::Degenerate(4));
    assert!(r.kernel_residual < 1e-8);
    // span{cos, sin}(2 pi x_i) with Lambda = 0
    let modes: Vec<AugmentedVector<f64>> = [
        Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()),
        Field::from_fn(g, |x| (2.0 * PI * x[0]).sin()),
        Field::from_fn(g, |x| (2.0 * PI * x[1]).cos()),
        Field::from_fn(g, |x| (2.0 * PI * x[1]).sin()),
    ]
    .into_iter()
    .map(|f| {
        let n = p.primed_norm(&crate::operators::stack(&f.to_basis(), 0.0), 0.0);
        AugmentedVector::new(f.scale(1.0 / n), 0.0)
    })
    .collect();
    let gram = p.primed_matrix();
    let angles = principal_angles(&basis(&r.kernel), &basis(&modes), &gram);
    assert!(angles[0] < 1e-8, "{angles:?}");
}

#[test]
fn striped_solution_carries_translation_kernel() {
    let (p, u, lambda) = striped(0.9 / (2.0 * PI), 16);
    let r = min_singular(&p, &u, &DegeneracyOptions::default()).unwrap();
    assert!(r.classification.is_degenerate());
    assert!(r.sigma_min <= 1e-6 * r.sigma_max);
    let du = u.partial(0);
    let n = p.primed_norm(&crate::operators::stack(&du.to_basis(), 0.0), 0.0);
    let shift = [AugmentedVector::new(du.scale(1.0 / n), 0.0)];
    let angles = principal_angles(&basis(&r.kernel), &basis(&shift), &p.primed_matrix());
    assert!(angles[0] < 1e-5, "{angles:?}");
    assert!(kernel_angle(&p, &r.kernel, &AugmentedVector::new(du.clone(), 0.0)) < 1e-5);
    let off = Field::from_modes(p.torus.grid(), &[Mode::cos([0, 2, 0], 1.0)]).unwrap();
    assert!(kernel_angle(&p, &r.kernel, &AugmentedVector::new(off, 0.0)) > 1.5);

    let c = cokernel_check(&p, &u, lambda, &DegeneracyOptions::default()).unwrap();
    assert!(c.dimension >= 1 && c.dimensions_agree() && c.max_residual <= 1e-8);
    let angles = principal_angles(&basis(&c.vectors), &basis(&shift), &p.primed_matrix());
    assert!(angles[0] < 1e-6);
}

#[test]
fn cokernel_matches_kernel_on_constants() {
    let opts = DegeneracyOptions::default();
    let p = problem(0.13, 16);
    let c = cokernel_check(&p, &Field::zeros(p.torus.grid()), 0.0, &opts).unwrap();
    assert_eq!((c.dimension, c.kernel_dimension), (0, 0));
    let p = problem(1.0 / (2.0 * PI), 16);
    let c = cokernel_check(&p, &Field::zeros(p.torus.grid()), 0.0, &opts).unwrap();
    assert_eq!((c.dimension, c.kernel_dimension), (4, 4));
    assert!(c.max_residual <= 1e-8);
}

#[test]
fn hessian_kernel_matches_linearized_kernel() {
    let opts = DegeneracyOptions::default();
    let nu = 0.1;
    let eps = (0.97f64).sqrt() / (2.0 * PI);
    let p = problem(eps, 16);
    let u = Field::constant(p.torus.grid(), nu);
    let r = hessian_correspondence(&p, &u, &opts).unwrap();
    assert_eq!((r.kernel_dimension, r.hessian_dimension), (4, 4));
    assert!(r.max_angle <= 1e-8, "{}", r.max_angle);
    let (p, u, _) = striped(0.9 / (2.0 * PI), 16);
    let r = hessian_correspondence(&p, &u, &opts).unwrap();
    assert_eq!(r.kernel_dimension, r.hessian_dimension);
    assert!(r.kernel_dimension >= 1 && r.max_angle <= 1e-6);
}

#[test]
fn iterative_path_agrees_with_dense() {
    let (p, u, _) = striped(0.9 / (2.0 * PI), 16);
    let dense = min_singular(&p, &u, &DegeneracyOptions::default()).unwrap();
    let opts = DegeneracyOptions {
        dense_limit: 0,
        ..DegeneracyOptions::default()
    };
    let it = min_singular(&p, &u, &opts).unwrap();
    assert_eq!(it.method, Method::Iterative);
    assert_eq!(it.classification, dense.classification);
    for (a, b) in dense.signed.iter().zip(&it.signed).skip(1).take(4) {
        assert!((a - b).abs() < 1e-7 * dense.sigma_max, "{a} {b}");
    }
    assert!((it.sigma_max - dense.sigma_max).abs() < 1e-3 * dense.sigma_max);
    assert_eq!(negative_count(&p, &u, 0).unwrap(), negative_count(&p, &u, usize::MAX).unwrap());
}

#[test]
fn conformal_factor_lifts_translation_degeneracy() {
    let eps = 0.9 / (2.0 * PI);
    let (p, u, lambda) = striped(eps, 16);
    let phi = Field::from_modes(p.torus.grid(), &[Mode::cos([2, 0, 0], 0.05)]).unwrap();
    let torus = p.torus.with_metric(TorusMetric::identity(2).with_phi(phi)).unwrap();
    let q = Problem::new(eps, torus, p.potential.clone()).unwrap();
    let s = newton_solve(&q, 0.0, (&u, lambda), &SolveOptions::default()).unwrap();
    let r = min_singular(&q, &s.u, &DegeneracyOptions::default()).unwrap();
    assert_eq!(r.classification, Classification::Nondegenerate);
    assert!(r.sigma_min >= 10.0 * r.tau * r.sigma_max, "{}", r.relative_sigma_min());
}

#[test]
fn inertia_changes_across_first_criterion() {
    let e1 = 1.0 / (2.0 * PI);
    let above = problem(e1 * 1.01, 16);
    let below = problem(e1 * 0.99, 16);
    let zero = Field::zeros(above.torus.grid());
    let a = negative_count(&above, &zero, usize::MAX).unwrap();
    let b = negative_count(&below, &zero, usize::MAX).unwrap();
    assert_eq!(b, a + 4);
}

#[test]
fn singular_values_invariant_under_rebasing() {
    use rand::{Rng, SeedableRng};
    let (p, u, _) = striped(0.85 / (2.0 * PI), 16);
    let curvature = p.curvature(&u.to_basis());
    let s = p.hessian_matrix(&curvature);
    let pm = p.primed_matrix();
    let base = generalized_symmetric_eigen(&s, &pm).unwrap().values;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let dim = s.nrows();
    let q = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let rebased = generalized_symmetric_eigen(&(q.transpose() * &s * &q), &(q.transpose() * &pm * &q))
        .unwrap()
        .values;
    let top = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in base.iter().zip(rebased.iter()) {
        assert!((a - b).abs() <= 1e-10 * top);
    }
}

