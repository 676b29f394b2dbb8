use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigenpairs of `A x = mu B x` with `B`-orthonormal eigenvectors, ascending.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen<T: Scalar> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_symmetric_eigen<T: Scalar>(a: DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let sym = (&a + a.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Dense symmetric-definite generalized eigenproblem via Cholesky reduction.
pub fn generalized_symmetric_eigen<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<GeneralizedEigen<T>> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?
        .transpose();
    let (values, y) = sorted_symmetric_eigen(reduced);
    let vectors = l
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    Ok(GeneralizedEigen { values, vectors })
}

/// Principal angles (radians, descending) of the column span of `y` relative
/// to the span of `x`. Both are assumed orthonormal in the inner product
/// `gram`. Angles come from the sines of the residual `y - x x^T G y`, which
/// stay accurate for nearly aligned subspaces.
pub fn principal_angles<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>, gram: &DMatrix<T>) -> Vec<T> {
    if y.ncols() == 0 {
        return Vec::new();
    }
    let residual = y - x * (x.transpose() * gram * y);
    let (values, _) = sorted_symmetric_eigen(residual.transpose() * gram * &residual);
    let mut angles: Vec<T> = values
        .iter()
        .map(|&v| {
            let s = if v > T::zero() { v.sqrt() } else { T::zero() };
            if s >= T::one() { T::frac_pi_2() } else { s.asin() }
        })
        .collect();
    angles.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    angles
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigen_matches_scaled_problem() {
        // A = diag(2, 6), B = diag(1, 3): both eigenvalues equal 2
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let e = generalized_symmetric_eigen(&a, &b).unwrap();
        assert!((e.values[0] - 2.0f64).abs() < 1e-14);
        assert!((e.values[1] - 2.0f64).abs() < 1e-14);
        let g = e.vectors.transpose() * &b * &e.vectors;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn principal_angles_of_rotated_line() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0f64, 0.0]);
        let t = 0.3f64;
        let y = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        let a = principal_angles(&x, &y, &DMatrix::identity(2, 2));
        assert!((a[0] - 0.3).abs() < 1e-14);
    }
}
