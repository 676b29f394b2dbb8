use crate::error::{Error, Result};
use crate::field::Field;
use crate::manifold::{Manifold, Torus};
use crate::potential::Potential;
use crate::scalar::Scalar;

/// The constant solution `u = nu / mu_g(M)`, `lambda = W'(u)`, as `(value, lambda)`.
pub fn constant_solution<T: Scalar>(pot: &Potential<T>, nu: T, m: &Manifold<T>) -> Result<(T, T)> {
    let c = nu / m.volume();
    Ok((c, pot.dw(c)))
}

/// [`constant_solution`] as a field on the torus grid.
pub fn constant_field<T: Scalar>(pot: &Potential<T>, nu: T, torus: &Torus<T>) -> (Field<T>, T) {
    let c = nu / torus.volume();
    (Field::constant(torus.grid(), c), pot.dw(c))
}

/// Degenerate `eps` on the constant branch:
/// `eps_j = sqrt(-W''(nu / vol) / alpha_j)` for the first `j_max` distinct
/// nonzero Laplacian eigenvalues, with their multiplicities (decreasing in `j`).
/// Empty when `W''(nu / vol) >= 0`.
pub fn degenerate_epsilons<T: Scalar>(pot: &Potential<T>, nu: T, m: &Manifold<T>, j_max: usize) -> Result<Vec<(T, usize)>> {
    if j_max == 0 {
        return Err(Error::InvalidArgument("j_max must be >= 1".into()));
    }
    let curvature = pot.d2w(nu / m.volume());
    if curvature >= T::zero() {
        return Ok(Vec::new());
    }
    Ok(m.laplacian_spectrum(j_max)?
        .into_iter()
        .map(|level| ((-curvature / level.value).sqrt(), level.multiplicity))
        .collect())
}

/// `P_M(1)`, the sum of Betti numbers: `2^d` for `T^d`, `2` for `S^2`.
pub fn morse_lower_bound<T: Scalar>(m: &Manifold<T>) -> usize {
    match m {
        Manifold::Torus(t) => 1 << t.dim(),
        Manifold::Sphere(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Sphere;
    use std::f64::consts::PI;

    #[test]
    fn constant_examples() {
        let w = Potential::<f64>::double_well();
        let t: Manifold<f64> = Torus::flat(2, 16).unwrap().into();
        assert_eq!(constant_solution(&w, 0.0, &t).unwrap(), (0.0, 0.0));
        let (c, l) = constant_solution(&w, 0.2, &t).unwrap();
        assert!((c - 0.2).abs() < 1e-15 && (l - (0.008 - 0.2)).abs() < 1e-15);
        let s: Manifold<f64> = Sphere::new(1.0, 10).unwrap().into();
        let (c, l) = constant_solution(&w, 1.0, &s).unwrap();
        let e = 1.0 / (4.0 * PI);
        assert!((c - e).abs() < 1e-15 && (l - (e * e * e - e)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_eps_examples() {
        let w = Potential::<f64>::double_well();
        let t: Manifold<f64> = Torus::flat(2, 16).unwrap().into();
        let eps = degenerate_epsilons(&w, 0.0, &t, 3).unwrap();
        for ((e, mult), m) in eps.iter().zip([1.0, 2.0, 4.0]) {
            assert!((e - 1.0 / (2.0 * PI * f64::sqrt(m))).abs() < 1e-15);
            assert_eq!(*mult, 4);
        }
        assert!(degenerate_epsilons(&w, 1.0, &t, 3).unwrap().is_empty());
        let s: Manifold<f64> = Sphere::new(1.0, 10).unwrap().into();
        let eps = degenerate_epsilons(&w, 0.0, &s, 4).unwrap();
        for (l, (e, mult)) in (1..=4).zip(eps) {
            assert!((e - 1.0 / ((l * (l + 1)) as f64).sqrt()).abs() < 1e-15);
            assert_eq!(mult, 2 * l + 1);
        }
        assert!(degenerate_epsilons(&w, 0.0, &s, 0).is_err());
    }

    #[test]
    fn morse_examples() {
        assert_eq!(morse_lower_bound::<f64>(&Torus::flat(2, 16).unwrap().into()), 4);
        assert_eq!(morse_lower_bound::<f64>(&Torus::flat(3, 16).unwrap().into()), 8);
        assert_eq!(morse_lower_bound::<f64>(&Sphere::new(1.0, 3).unwrap().into()), 2);
    }
}
