//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // float math is only inherent in `core` on recent toolchains
use num_traits::Float;

/// Largest absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// True when `m` is square and symmetric up to `tol` relative to its largest entry.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= tol * max_abs(m).max(1.0)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    symmetrize(m).symmetric_eigen()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.max()
}

/// Symmetric square root `U diag(sqrt(max(λ, 0))) Uᵀ` of a positive-semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    symmetrize(&(u * DMatrix::from_diagonal(&roots) * u.transpose()))
}

/// Diagonal part of `m` as a matrix.
pub fn diag_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&m.diagonal())
}

/// `Tr(A⁻¹ B)` for symmetric positive-definite `A`; `None` if the Cholesky factorization fails.
pub fn trace_solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let chol = symmetrize(a).cholesky()?;
    Some(chol.solve(b).trace())
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Solves `X A + A X = C` for symmetric positive-definite `A` and symmetric `C`.
///
/// With `A = U Λ Uᵀ`, the solution is `U [ (Uᵀ C U)_mn / (λ_m + λ_n) ] Uᵀ`,
/// returned symmetrized. `None` when `A` is not positive-definite.
pub fn solve_lyapunov_spd(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = sym_eigen(a);
    let lambdas = &eig.eigenvalues;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return None;
    }
    let u = &eig.eigenvectors;
    let mut y = u.transpose() * c * u;
    let n = y.nrows();
    for i in 0..n {
        for j in 0..n {
            y[(i, j)] /= lambdas[i] + lambdas[j];
        }
    }
    Some(symmetrize(&(u * y * u.transpose())))
}

/// Weighted squared norm `xᵀ W x`.
pub fn weighted_sq_norm(x: &[f64], w: &DMatrix<f64>) -> f64 {
    let m = x.len();
    let mut acc = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            row += w[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// Squared Euclidean norm.
pub fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Dense matrix from row slices.
pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Rows of a dense matrix.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Column vector from a slice.
pub fn vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lyapunov_solution_has_small_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 2.0, 0.1, 0.0, 0.1, 1.5]);
        let x = solve_lyapunov_spd(&a, &c).unwrap();
        let residual = &x * &a + &a * &x - &c;
        assert!(residual.norm() < 1e-12);
        assert!(asymmetry(&x) == 0.0);
    }

    #[test]
    fn lyapunov_with_isotropic_rhs_is_half_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = solve_lyapunov_spd(&a, &a).unwrap();
        assert_relative_eq!(x, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(solve_lyapunov_spd(&a, &DMatrix::identity(2, 2)).is_none());
    }

    #[test]
    fn sqrt_squares_back() {
        let r = DMatrix::from_row_slice(2, 2, &[0.99, 0.99, 0.99, 1.0]);
        let f = sym_sqrt(&r);
        assert_relative_eq!(&f * &f, r, epsilon = 1e-12);
    }

    #[test]
    fn trace_helpers_agree() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(trace_product(&a, &b), (&a * &b).trace(), epsilon = 1e-14);
        let inv = a.clone().try_inverse().unwrap();
        assert_relative_eq!(trace_solve_spd(&a, &b).unwrap(), (inv * &b).trace(), epsilon = 1e-12);
    }
}
