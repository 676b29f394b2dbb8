use nalgebra::{DMatrix, DVector};

use super::{linearized_norm, min_singular, DegeneracyOptions};
use crate::error::{Error, Result};
use crate::field::{AugmentedVector, Field};
use crate::linalg::{generalized_symmetric_eigen, principal_angles};
use crate::operators::Problem;
use crate::potential::check_field;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct CokernelReport<T: Scalar> {
    /// Dimension of the primed orthogonal complement of `im dF`.
    pub dimension: usize,
    /// Kernel dimension reported by [`min_singular`].
    pub kernel_dimension: usize,
    /// Largest linearized residual of the sign-flipped cokernel vectors.
    pub max_residual: T,
    /// Cokernel vectors `(v, Lambda)` before the sign flip, primed-orthonormal.
    pub vectors: Vec<AugmentedVector<T>>,
    pub singular_values: Vec<T>,
}

impl<T: Scalar> CokernelReport<T> {
    pub fn dimensions_agree(&self) -> bool {
        self.dimension == self.kernel_dimension
    }
}

fn check_dense<T: Scalar>(problem: &Problem<T>, limit: usize) -> Result<()> {
    let dim = problem.dim() + 1;
    if dim > limit {
        return Err(Error::Unsupported(format!(
            "dense analysis limited to augmented dimension {limit}, got {dim}"
        )));
    }
    Ok(())
}

/// Left kernel of `dF` in the primed inner product, computed from an SVD of
/// the dense Jacobian in primed-orthonormal coordinates. Each left-kernel
/// element `(v, Lambda)` is turned into `(v, -Lambda)` and checked against the
/// linearized problem.
pub fn cokernel_check<T: Scalar>(
    problem: &Problem<T>,
    u: &Field<T>,
    lambda: T,
    opts: &DegeneracyOptions<T>,
) -> Result<CokernelReport<T>> {
    let _ = lambda; // the linearization does not depend on lambda
    check_field(&problem.torus, u)?;
    check_dense(problem, opts.dense_limit)?;
    let curvature = problem.curvature(&u.to_basis());
    let dim = problem.dim() + 1;
    let p = problem.primed_matrix();
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("primed Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    // dF as an explicit matrix, column by column
    let mut df = DMatrix::zeros(dim, dim);
    let mut e = DVector::zeros(dim);
    for j in 0..dim {
        e[j] = T::one();
        df.set_column(j, &problem.df_coords(&curvature, &e)?);
        e[j] = T::zero();
    }
    // F~ = L^T dF L^{-T}: dF in coordinates orthonormal for P = L L^T
    let right = l
        .solve_lower_triangular(&df.transpose())
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?
        .transpose();
    let ft = l.transpose() * right;
    // left singular vectors of F~ as right singular vectors of F~^T: the
    // latter stay accurate for the smallest singular values
    let svd = ft.transpose().svd(false, true);
    let u_mat = svd.v_t.expect("requested").transpose();
    let sigmas = svd.singular_values;
    let top = sigmas.iter().fold(T::zero(), |m, &v| m.max(v));
    let cut = opts.tau * top;
    let grid = problem.torus.grid();
    let mut vectors = Vec::new();
    let mut max_residual = T::zero();
    let mut singular_values: Vec<T> = sigmas.iter().copied().collect();
    singular_values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    for i in 0..sigmas.len() {
        if sigmas[i] > cut {
            continue;
        }
        // back to original coordinates: y = L^{-T} u_i
        let y = l
            .tr_solve_lower_triangular(&u_mat.column(i).into_owned())
            .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
        let mut flipped = y.clone();
        flipped[dim - 1] = -flipped[dim - 1];
        max_residual = max_residual.max(linearized_norm(problem, &curvature, &flipped)?);
        vectors.push(AugmentedVector::from_vector(grid, &y));
    }
    let report = min_singular(problem, u, opts)?;
    Ok(CokernelReport {
        dimension: vectors.len(),
        kernel_dimension: report.kernel.len(),
        max_residual,
        vectors,
        singular_values,
    })
}

#[derive(Clone, Debug)]
pub struct CorrespondenceReport<T> {
    /// Kernel dimension of the augmented linearized map.
    pub kernel_dimension: usize,
    /// Kernel dimension of the Hessian of `J` restricted to `int v = 0`.
    pub hessian_dimension: usize,
    /// Largest principal angle between the two kernels (primed metric).
    pub max_angle: T,
}

/// Compares the kernel of `dF` with the kernel of the Hessian of `J` on the
/// tangent space `{int v dmu_g = 0}`, each lifted to `(v, Lambda)`.
pub fn hessian_correspondence<T: Scalar>(
    problem: &Problem<T>,
    u: &Field<T>,
    opts: &DegeneracyOptions<T>,
) -> Result<CorrespondenceReport<T>> {
    check_field(&problem.torus, u)?;
    check_dense(problem, opts.dense_limit)?;
    let n = problem.dim();
    let report = min_singular(problem, u, opts)?;
    let curvature = problem.curvature(&u.to_basis());
    let s = problem.hessian_matrix(&curvature);
    let h = s.view((0, 0), (n, n)).into_owned();
    let e = problem.primed_matrix().view((0, 0), (n, n)).into_owned();
    // constraint covector m = M 1; tangent basis from a Householder reflector
    let m = problem.torus.mass_of_one();
    let mut w = m.clone();
    w[0] -= m.norm();
    let wn = w.norm();
    let z = if wn > T::zero() {
        let w = w / wn;
        let refl = DMatrix::identity(n, n) - (&w * w.transpose()) * T::lit(2.0);
        refl.columns(1, n - 1).into_owned()
    } else {
        DMatrix::identity(n, n).columns(1, n - 1).into_owned()
    };
    let hz = z.transpose() * &h * &z;
    let ez = z.transpose() * &e * &z;
    let eig = generalized_symmetric_eigen(&hz, &ez)?;
    let top = eig.values.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let cut = opts.tau * top;
    let mut lifted: Vec<DVector<T>> = Vec::new();
    let mm = m.dot(&m);
    for i in 0..eig.values.len() {
        if eig.values[i].abs() > cut {
            continue;
        }
        let v = &z * eig.vectors.column(i);
        // H v = Lambda m on the kernel
        let big = m.dot(&(&h * &v)) / mm;
        lifted.push(DVector::from_fn(n + 1, |r, _| if r < n { v[r] } else { big }));
    }
    let p = problem.primed_matrix();
    let orthonormal = |cols: &[DVector<T>]| -> Result<DMatrix<T>> {
        if cols.is_empty() {
            return Ok(DMatrix::zeros(n + 1, 0));
        }
        let x = DMatrix::from_columns(cols);
        let g = x.transpose() * &p * &x;
        let chol = g
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("kernel basis is rank deficient".into()))?;
        // X L^{-T} is P-orthonormal when X^T P X = L L^T
        Ok(chol
            .l()
            .solve_lower_triangular(&x.transpose())
            .ok_or_else(|| Error::InvalidArgument("kernel basis is rank deficient".into()))?
            .transpose())
    };
    let from_df: Vec<DVector<T>> = report.kernel.iter().map(|k| k.to_vector()).collect();
    let xa = orthonormal(&from_df)?;
    let xb = orthonormal(&lifted)?;
    let max_angle = if xa.ncols() == xb.ncols() {
        let a1 = principal_angles(&xa, &xb, &p);
        let a2 = principal_angles(&xb, &xa, &p);
        a1.into_iter().chain(a2).fold(T::zero(), |m, v| m.max(v))
    } else {
        T::frac_pi_2()
    };
    Ok(CorrespondenceReport {
        kernel_dimension: xa.ncols(),
        hessian_dimension: xb.ncols(),
        max_angle,
    })
}
