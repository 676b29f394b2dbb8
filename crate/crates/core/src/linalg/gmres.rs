use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GmresOutcome<T: Scalar> {
    pub solution: DVector<T>,
    pub iterations: usize,
    /// Final residual relative to the right-hand side.
    pub relative_residual: T,
    pub converged: bool,
}

/// Restarted GMRES in a caller-supplied inner product.
pub fn gmres<T, A, I>(
    apply: A,
    inner: I,
    rhs: &DVector<T>,
    rtol: T,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome<T>
where
    T: Scalar,
    A: Fn(&DVector<T>) -> DVector<T>,
    I: Fn(&DVector<T>, &DVector<T>) -> T,
{
    let norm = |v: &DVector<T>| inner(v, v).max(T::zero()).sqrt();
    let bnorm = norm(rhs);
    let mut x = DVector::zeros(rhs.len());
    if bnorm == T::zero() {
        return GmresOutcome {
            solution: x,
            iterations: 0,
            relative_residual: T::zero(),
            converged: true,
        };
    }
    let mut total = 0;
    let mut rel = T::one();
    while total < max_iter {
        let r = rhs - apply(&x);
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= rtol {
            return GmresOutcome {
                solution: x,
                iterations: total,
                relative_residual: rel,
                converged: true,
            };
        }
        let m = restart.min(max_iter - total);
        let mut basis: Vec<DVector<T>> = vec![r / beta];
        let mut h = DMatrix::<T>::zeros(m + 1, m);
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = DVector::<T>::zeros(m + 1);
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = apply(&basis[j]);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = inner(&w, q);
                    h[(i, j)] += c;
                    w.axpy(-c, q, T::one());
                }
            }
            let wn = norm(&w);
            h[(j + 1, j)] = wn;
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let denom = (h[(j, j)] * h[(j, j)] + h[(j + 1, j)] * h[(j + 1, j)]).sqrt();
            if denom == T::zero() {
                cs[j] = T::one();
                sn[j] = T::zero();
            } else {
                cs[j] = h[(j, j)] / denom;
                sn[j] = h[(j + 1, j)] / denom;
            }
            h[(j, j)] = cs[j] * h[(j, j)] + sn[j] * h[(j + 1, j)];
            h[(j + 1, j)] = T::zero();
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].abs() / bnorm;
            if rel <= rtol || wn <= T::eps() * bnorm {
                break;
            }
            basis.push(w / wn);
        }
        // back substitution on the triangular part
        let mut y = DVector::<T>::zeros(used);
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[(i, k)] * y[k];
            }
            y[i] = if h[(i, i)] == T::zero() { T::zero() } else { s / h[(i, i)] };
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &basis[i], T::one());
        }
        if rel <= rtol {
            let r = rhs - apply(&x);
            rel = norm(&r) / bnorm;
            if rel <= rtol * T::lit(10.0) {
                return GmresOutcome {
                    solution: x,
                    iterations: total,
                    relative_residual: rel,
                    converged: true,
                };
            }
        }
    }
    GmresOutcome {
        solution: x,
        iterations: total,
        relative_residual: rel,
        converged: false,
    }
}
