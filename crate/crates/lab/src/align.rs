//! Translation alignment of torus fields.

use cahn_core::Field;
use nalgebra::{DMatrix, DVector};

/// Shift `s` minimizing `|| a(. - s) - b ||` (flat `L^2`) and the distance there.
///
/// A search over grid shifts picks the start; Gauss-Newton on the
/// continuous shift then refines it.
pub fn align(a: &Field<f64>, b: &Field<f64>) -> (Vec<f64>, f64) {
    let grid = a.grid();
    let d = grid.dim();
    let n = grid.n();
    let dist = |s: &[f64]| (&a.shifted(s) - b).l2_norm();
    let mut best = (vec![0.0; d], dist(&vec![0.0; d]));
    for idx in 0..n.pow(d as u32) {
        let s: Vec<f64> = (0..d).map(|ax| ((idx / n.pow(ax as u32)) % n) as f64 / n as f64).collect();
        let r = dist(&s);
        if r < best.1 {
            best = (s, r);
        }
    }
    let (mut s, mut r) = best;
    for _ in 0..20 {
        let shifted = a.shifted(&s);
        let res = (&shifted - b).to_basis();
        // d/ds_k a(x - s) = -(d_k a)(x - s)
        let cols: Vec<DVector<f64>> = (0..d).map(|k| -shifted.partial(k).to_basis()).collect();
        let jac = DMatrix::from_columns(&cols);
        // stripes leave shifts along the stripe unresolved, so the least-squares
        // step must tolerate a rank-deficient Jacobian
        let scale = jac.norm().max(f64::MIN_POSITIVE);
        let Ok(step) = jac.svd(true, true).solve(&(-res), 1e-10 * scale) else { break };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let trial: Vec<f64> = s.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let rt = dist(&trial);
            if rt < r {
                s = trial;
                r = rt;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved || step.norm() < 1e-14 {
            break;
        }
    }
    let s = s.iter().map(|x| x.rem_euclid(1.0)).collect();
    (s, r)
}
