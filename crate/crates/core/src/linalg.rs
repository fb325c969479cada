//! Small dense helpers for symmetric d×d matrices.
//!
//! Everything here works on `nalgebra` dynamic matrices; d is small (at most 8
//! in practice), so clarity wins over blocking or SIMD.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerance used when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Rank-3 tensor `T[i][j][k]`, stored densely with `k` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.dim + j) * self.dim + k] = value;
    }

    /// The matrix slice `T[·][·][k]`.
    pub fn slice(&self, k: usize) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j, k))
    }

    /// Contraction over the last index: `(T·v)_ij = Σ_k T_ijk v_k`.
    pub fn contract_last(&self, v: &Vector) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| {
            (0..self.dim).map(|k| self.get(i, j, k) * v[k]).sum()
        })
    }

    /// Largest violation of `T_ijk = T_jik`.
    pub fn asymmetry_first_pair(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    worst = worst.max((self.get(i, j, k) - self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }
}

/// Max absolute difference between `m` and its transpose.
pub fn asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let asym = asymmetry(m);
    let scale = 1.0 + m.amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_map(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mapped = eig.eigenvalues.map(f);
    let q = &eig.eigenvectors;
    symmetrize(&(q * Matrix::from_diagonal(&mapped) * q.transpose()))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.amax()
}

/// Matrix absolute value `|M| = Pᵀ|Λ|P`.
pub fn sym_abs(m: &Matrix) -> Matrix {
    sym_map(m, f64::abs)
}

/// Clamps every eigenvalue of `m` from below at `a`, keeping eigenvectors.
pub fn project_spd_floor(m: &Matrix, a: f64) -> Result<Matrix> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spectral floor must be positive, got {a}"
        )));
    }
    check_symmetric(m)?;
    if min_eigenvalue(m) >= a {
        return Ok(m.clone());
    }
    Ok(sym_map(m, |l| l.max(a)))
}

/// `exp(scale · M)` for symmetric `M`.
pub fn sym_exp(m: &Matrix, scale: f64) -> Matrix {
    sym_map(m, |l| (scale * l).exp())
}

/// Principal square root of a symmetric PSD matrix; `None` when an
/// eigenvalue is negative beyond round-off.
pub fn sym_sqrt_psd(m: &Matrix) -> Option<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let tol = 1e-12 * (1.0 + eig.eigenvalues.amax());
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return None;
    }
    let q = &eig.eigenvectors;
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Some(symmetrize(&(q * Matrix::from_diagonal(&root) * q.transpose())))
}

/// `Tr(Y A⁻¹ Y)` for symmetric `Y` and SPD `A`, through a Cholesky solve.
pub fn trace_sandwich_inv(y: &Matrix, a: &Matrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    // A = L Lᵀ  ⇒  Tr(Y A⁻¹ Y) = ‖L⁻¹ Y‖²_F
    let z = chol.l().solve_lower_triangular(y)?;
    Some(z.norm_squared())
}

/// `Tr(M A⁻¹)` for SPD `A`.
pub fn trace_mul_inv(m: &Matrix, a: &Matrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(chol.solve(m).trace())
}

/// Frobenius inner product `A : B = Tr(A Bᵀ)`.
pub fn frobenius_dot(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn floor_projection_matches_hand_eigendecomposition() {
        let m = m2(0.0, 1.0, 1.0, 0.0);
        let p = project_spd_floor(&m, 0.5).unwrap();
        let expected = m2(0.75, 0.25, 0.25, 0.75);
        assert!((p - expected).amax() < 1e-14);
    }

    #[test]
    fn floor_projection_leaves_admissible_input_alone() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]));
        assert_eq!(project_spd_floor(&m, 1.0).unwrap(), m);
        let clamped = project_spd_floor(&Matrix::from_element(1, 1, -0.25), 0.05).unwrap();
        assert!((clamped[(0, 0)] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn floor_projection_rejects_asymmetric_input() {
        let m = m2(1.0, 0.5, 0.0, 1.0);
        assert!(matches!(
            project_spd_floor(&m, 0.1),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn abs_of_indefinite_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -3.0]));
        let a = sym_abs(&m);
        assert!((a - Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);
    }

    #[test]
    fn sandwich_trace_matches_explicit_inverse() {
        let a = m2(2.0, 0.3, 0.3, 1.0);
        let y = m2(-1.0, 0.7, 0.7, 0.4);
        let explicit = (&y * a.clone().try_inverse().unwrap() * &y).trace();
        assert!((trace_sandwich_inv(&y, &a).unwrap() - explicit).abs() < 1e-13);
    }

    #[test]
    fn sym_exp_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let e = sym_exp(&m, -0.5);
        assert!((e[(0, 0)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-15);
    }
}
