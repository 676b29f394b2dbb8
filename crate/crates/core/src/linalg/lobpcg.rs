//! Locally optimal block preconditioned conjugate gradients for the smallest
//! eigenpairs of a symmetric-definite pencil `A x = mu B x`.

use nalgebra::{DMatrix, DVector};

use super::dense::sorted_symmetric_eigen;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct LobpcgOptions<T> {
    /// Residual tolerance relative to `|A|` times the `B`-norm scale.
    pub tol: T,
    pub max_iter: usize,
}

#[derive(Clone, Debug)]
pub struct LobpcgOutcome<T: Scalar> {
    pub values: DVector<T>,
    /// `B`-orthonormal eigenvector block.
    pub vectors: DMatrix<T>,
    pub residuals: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

type BlockOp<'a, T> = &'a dyn Fn(&DMatrix<T>) -> DMatrix<T>;

fn hstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// `B`-orthonormalizes the columns of `s` (SVQB with rank dropping) and
/// returns the coefficient transform `s -> s * t`.
fn svqb<T: Scalar>(s: &DMatrix<T>, bs: &DMatrix<T>) -> DMatrix<T> {
    let gram = s.transpose() * bs;
    let diag: Vec<T> = (0..gram.ncols())
        .map(|i| {
            let d = gram[(i, i)];
            if d > T::zero() { T::one() / d.sqrt() } else { T::zero() }
        })
        .collect();
    let scaled = DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] * diag[i] * diag[j]);
    let (values, vectors) = sorted_symmetric_eigen(scaled);
    let top = values.iter().fold(T::zero(), |m, &v| if v > m { v } else { m });
    let drop = top * T::eps().sqrt() * T::lit(1e-2);
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > drop).collect();
    DMatrix::from_fn(gram.nrows(), keep.len(), |i, j| {
        vectors[(i, keep[j])] * diag[i] / values[keep[j]].sqrt()
    })
}

/// Two SVQB passes; the second repairs the orthogonality lost to rounding in
/// the first when the block is nearly dependent.
fn svqb2<T: Scalar>(s: &DMatrix<T>, bs: &DMatrix<T>) -> DMatrix<T> {
    let t1 = svqb(s, bs);
    let t2 = svqb(&(s * &t1), &(bs * &t1));
    t1 * t2
}

fn project_out<T: Scalar>(x: &mut DMatrix<T>, y: Option<(&DMatrix<T>, &DMatrix<T>)>) {
    if let Some((y, by)) = y {
        let coef = by.transpose() * &*x;
        *x -= y * coef;
    }
}

/// Smallest `x0.ncols()` eigenpairs of `A x = mu B x`, with optional
/// constraints `Y` (`B`-orthonormal columns the solution must avoid).
pub fn lobpcg<T: Scalar>(
    a: BlockOp<'_, T>,
    b: BlockOp<'_, T>,
    precond: BlockOp<'_, T>,
    constraints: Option<&DMatrix<T>>,
    x0: DMatrix<T>,
    opts: LobpcgOptions<T>,
) -> LobpcgOutcome<T> {
    let k = x0.ncols();
    let by = constraints.map(b);
    let cons = constraints.zip(by.as_ref());
    let mut x = x0;
    project_out(&mut x, cons);
    let bx = b(&x);
    let t = svqb2(&x, &bx);
    x = &x * &t;
    let mut ax = a(&x);
    let mut bx = b(&x);
    // initial Rayleigh-Ritz
    let (vals, vecs) = sorted_symmetric_eigen(x.transpose() * &ax);
    let mut theta: DVector<T> = vals.rows(0, k.min(vals.len())).into_owned();
    let c = vecs.columns(0, theta.len()).into_owned();
    x = &x * &c;
    ax = &ax * &c;
    bx = &bx * &c;
    let mut anorm = vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut p: Option<DMatrix<T>> = None;
    let mut residuals = vec![T::max_value().unwrap_or(T::one()); k];
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mut r = &ax - &bx * DMatrix::from_diagonal(&theta);
        let scale = anorm.max(T::eps());
        let mut active = Vec::new();
        for i in 0..theta.len() {
            let bnorm = bx.column(i).norm().max(T::eps());
            residuals[i] = r.column(i).norm() / (scale * bnorm);
            if residuals[i] > opts.tol {
                active.push(i);
            }
        }
        if active.is_empty() {
            converged = true;
            break;
        }
        let ra = DMatrix::from_fn(r.nrows(), active.len(), |i, j| r[(i, active[j])]);
        r = ra;
        let mut w = precond(&r);
        project_out(&mut w, cons);
        // normalize directions before mixing them with X
        for mut col in w.column_iter_mut() {
            let n = col.norm();
            if n > T::zero() {
                col /= n;
            }
        }
        // all products are formed explicitly: implicit updates of A P and B P
        // drift enough to break B-orthonormality in long runs
        let s = match &p {
            Some(pp) => hstack(&[&x, &w, pp]),
            None => hstack(&[&x, &w]),
        };
        let bs = b(&s);
        let t = svqb2(&s, &bs);
        if t.ncols() < k {
            break;
        }
        let s = &s * &t;
        let as_ = a(&s);
        let (vals, vecs) = sorted_symmetric_eigen(s.transpose() * &as_);
        anorm = anorm.max(vals.iter().fold(T::zero(), |m, &v| m.max(v.abs())));
        let c = vecs.columns(0, k).into_owned();
        let xn = &s * &c;
        // search direction: part of the new block not in the span of the old one
        let overlap = bx.transpose() * &xn;
        let pn = &xn - &x * &overlap;
        p = Some(DMatrix::from_fn(pn.nrows(), active.len(), |i, j| pn[(i, active[j])]));
        theta = vals.rows(0, k).into_owned();
        x = xn;
        ax = &as_ * &c;
        bx = b(&x);
    }
    LobpcgOutcome {
        values: theta,
        vectors: x,
        residuals,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_smallest_of_diagonal_pencil() {
        let n = 60;
        let a = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| (i / 2) as f64 + 0.5));
        let bdiag = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
        let bm = DMatrix::from_diagonal(&bdiag);
        let x0 = DMatrix::from_fn(n, 4, |i, j| ((i * 31 + j * 17) % 13) as f64 - 6.0);
        let out = lobpcg(
            &|x| &a * x,
            &|x| &bm * x,
            &|r| r.clone(),
            None,
            x0,
            LobpcgOptions { tol: 1e-12, max_iter: 500 },
        );
        assert!(out.converged, "{:?} after {}", out.residuals, out.iterations);
        let expect = [0.5, 0.5 / 1.01, 1.5 / 1.02, 1.5 / 1.03];
        let mut e = expect.to_vec();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, x) in out.values.iter().zip(e) {
            assert!((v - x).abs() < 1e-10, "{v} vs {x}");
        }
    }
}
