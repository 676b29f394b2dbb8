use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Returns the solution and the iteration count.
pub fn pcg<T, A, M>(
    apply: A,
    precond: M,
    rhs: &DVector<T>,
    rtol: T,
    max_iter: usize,
) -> Result<(DVector<T>, usize)>
where
    T: Scalar,
    A: Fn(&DVector<T>) -> DVector<T>,
    M: Fn(&DVector<T>) -> DVector<T>,
{
    let bnorm = rhs.norm();
    let mut x = DVector::zeros(rhs.len());
    if bnorm == T::zero() {
        return Ok((x, 0));
    }
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let ap = apply(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        let rel = r.norm() / bnorm;
        if history.len() < 8 || it % 10 == 0 {
            history.push(rel.as_f64());
        }
        if rel <= rtol {
            return Ok((x, it));
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    Err(Error::NoConvergence {
        method: "conjugate gradients",
        iterations: max_iter,
        residuals: history,
    })
}
