//! Small dense symmetric-matrix helpers shared across modules.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

/// Relative eigenvalue floor used when forming inverse square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    if a.nrows() == 1 {
        return a[(0, 0)];
    }
    SymmetricEigen::new(sym(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric 3×3 matrix.
pub fn max_eigenvalue3(a: &Matrix3<f64>) -> f64 {
    let s = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Applies `f` to the eigenvalues of a symmetric 3×3 matrix, flooring them at
/// `EIGEN_FLOOR · λ_max` first.
fn spectral_map3(a: &Matrix3<f64>, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
    let s = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let top = eig.eigenvalues.max().max(0.0);
    let floor = EIGEN_FLOOR * top;
    let mapped = eig.eigenvalues.map(|l| f(l.max(floor)));
    eig.eigenvectors * Matrix3::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// `A^{-1/2}` of a symmetric positive definite matrix.
pub fn inv_sqrt3(a: &Matrix3<f64>) -> Matrix3<f64> {
    spectral_map3(a, |l| 1.0 / l.sqrt())
}

/// `A^{1/2}` of a symmetric positive semidefinite matrix.
pub fn sqrt3(a: &Matrix3<f64>) -> Matrix3<f64> {
    spectral_map3(a, f64::sqrt)
}

/// Eigen-decomposition sorted ascending: (values, vectors as columns).
pub fn sorted_eigen3(a: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let s = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = Vector3::new(
        eig.eigenvalues[idx[0]],
        eig.eigenvalues[idx[1]],
        eig.eigenvalues[idx[2]],
    );
    let vecs = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ]);
    (vals, vecs)
}

pub fn to_dmatrix3(a: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| a[(i, j)])
}

pub fn from_dmatrix3(a: &DMatrix<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[(i, j)])
}

/// Frobenius inner product `tr(Aᵀ B)`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_square_root_squares_back_to_inverse() {
        let a = Matrix3::new(4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0);
        let r = inv_sqrt3(&a);
        let inv = a.try_inverse().unwrap();
        assert_relative_eq!(r * r, inv, epsilon = 1e-12);
        let s = sqrt3(&a);
        assert_relative_eq!(s * s, a, epsilon = 1e-12);
    }

    #[test]
    fn sorted_eigen_is_ascending() {
        let a = Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 2.0));
        let (v, _) = sorted_eigen3(&a);
        assert_eq!(v, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(max_eigenvalue3(&a), 3.0);
        assert_eq!(min_eigenvalue(&to_dmatrix3(&a)), 1.0);
    }
}
