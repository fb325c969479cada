//! Dirichlet Green's tensor of `−∂ₜ² + B_ε` on `[0,1]` and the fundamental
//! matrix of `z′ = −ε⁻¹A(t)z`.
//!
//! The operator is discretized with second-order central differences on the
//! interior nodes `t_1 .. t_{n−1}`, giving a symmetric block-tridiagonal matrix
//! `L` with diagonal blocks `2n²I + B_ε(t_i)` and off-diagonal blocks `−n²I`.
//! A point source at node `s` is represented as `n·I`, so the Green's tensor
//! restricted to the grid is `n·L⁻¹`.

use crate::error::{Error, Result};
use crate::grid::{field_derivative, trapezoid, FieldGrid};
use crate::linalg::{sym_exp, symmetrize, Matrix};

/// Green's function of `−∂ₜ² + (λ/ε)²` on `[0,1]` with Dirichlet conditions,
///
/// `ε·sinh(|λ|·min(s,t)/ε)·sinh(|λ|·(1−max(s,t))/ε) / (|λ|·sinh(|λ|/ε))`,
///
/// evaluated in exponent-shifted form so that no `sinh` overflows.
pub fn analytic_const_green(lam: f64, eps: f64, t: f64, s: f64) -> Result<f64> {
    if lam == 0.0 || !lam.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be non-zero, got {lam}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let l = lam.abs();
    let a = l / eps;
    let lo = t.min(s).clamp(0.0, 1.0);
    let hi = t.max(s).clamp(0.0, 1.0);
    // sinh(x) = eˣ·(1 − e^{−2x})/2
    let num = (-(-2.0 * a * lo).exp_m1()) * (-(-2.0 * a * (1.0 - hi)).exp_m1());
    let den = 2.0 * (-(-2.0 * a).exp_m1());
    Ok(eps / l * (a * (lo - hi)).exp() * num / den)
}

/// The discretized operator `−∂ₜ² + B_ε` acting on interior unknowns.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator {
    n: usize,
    d: usize,
    eps: f64,
    b_nodes: Vec<Matrix>,
}

impl SchrodingerOperator {
    /// Builds an operator from explicit interior potentials `B(t_1..t_{n−1})`.
    pub fn from_nodes(n: usize, eps: f64, b_nodes: Vec<Matrix>) -> Result<Self> {
        if n < crate::grid::MIN_INTERVALS {
            return Err(Error::GridTooSmall(n));
        }
        if b_nodes.len() != n - 1 {
            return Err(Error::LengthMismatch {
                expected: n - 1,
                got: b_nodes.len(),
            });
        }
        let d = b_nodes[0].nrows();
        for b in &b_nodes {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.ncols(),
                });
            }
            let asym = crate::linalg::asymmetry(b);
            if asym > crate::linalg::SYMMETRY_TOL * (1.0 + b.amax()) {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(Self { n, d, eps, b_nodes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `B_ε(t_i)` for interior nodes `i = 1..n−1` (stored at index `i−1`).
    pub fn b_nodes(&self) -> &[Matrix] {
        &self.b_nodes
    }

    /// Diagonal block `2n²I + B_ε(t_i)` for interior node `i`.
    pub fn diagonal_block(&self, i: usize) -> Matrix {
        let n2 = (self.n * self.n) as f64;
        Matrix::identity(self.d, self.d) * (2.0 * n2) + &self.b_nodes[i - 1]
    }

    /// Scalar coefficient of the off-diagonal blocks, `−n²`.
    pub fn off_diagonal(&self) -> f64 {
        -((self.n * self.n) as f64)
    }

    /// Dense form, for small problems and tests.
    pub fn to_dense(&self) -> Matrix {
        let m = self.n - 1;
        let d = self.d;
        let mut out = Matrix::zeros(m * d, m * d);
        for i in 1..self.n {
            let r = (i - 1) * d;
            out.view_mut((r, r), (d, d)).copy_from(&self.diagonal_block(i));
            if i + 1 < self.n {
                for k in 0..d {
                    out[(r + k, r + d + k)] = self.off_diagonal();
                    out[(r + d + k, r + k)] = self.off_diagonal();
                }
            }
        }
        out
    }

    /// Block Cholesky factorization `L = C Cᵀ` with `C` block lower bidiagonal.
    pub fn factorize(&self) -> Result<BlockCholesky> {
        let m = self.n - 1;
        let n4 = self.off_diagonal() * self.off_diagonal();
        let mut schur_inv: Vec<Matrix> = Vec::with_capacity(m);
        let mut chol: Vec<Matrix> = Vec::with_capacity(m);
        for i in 1..=m {
            let mut s = self.diagonal_block(i);
            if let Some(prev) = schur_inv.last() {
                s -= prev * n4;
            }
            let c = symmetrize(&s)
                .cholesky()
                .ok_or(Error::Indefinite { node: i })?;
            let inv = symmetrize(&c.inverse());
            chol.push(c.l());
            schur_inv.push(inv);
        }
        Ok(BlockCholesky {
            n: self.n,
            d: self.d,
            off: self.off_diagonal(),
            chol,
            schur_inv,
        })
    }
}

/// Assembles `−∂ₜ² + B_ε` with `B_ε = ε⁻²A² − ε⁻¹A′` on interior nodes.
pub fn assemble_operator(a: &FieldGrid, eps: f64) -> Result<SchrodingerOperator> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let n = a.n();
    let da = field_derivative(a);
    let b_nodes = (1..n)
        .map(|i| {
            let ai = &a.values()[i];
            symmetrize(&((ai * ai) / (eps * eps) - &da[i] / eps))
        })
        .collect();
    Ok(SchrodingerOperator {
        n,
        d: a.dim(),
        eps,
        b_nodes,
    })
}

/// Block factorization of the operator together with the inverse Schur
/// complements from the forward sweep.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    n: usize,
    d: usize,
    off: f64,
    /// Lower Cholesky factors `C_i` of the Schur complements `S_i`.
    chol: Vec<Matrix>,
    schur_inv: Vec<Matrix>,
}

impl BlockCholesky {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Diagonal blocks of the operator inverse, by the backward sweep
    /// `Σ_i = S_i⁻¹ + n⁴·S_i⁻¹ Σ_{i+1} S_i⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<Matrix> {
        let m = self.n - 1;
        let n4 = self.off * self.off;
        let mut sigma = vec![Matrix::zeros(self.d, self.d); m];
        sigma[m - 1] = self.schur_inv[m - 1].clone();
        for i in (0..m - 1).rev() {
            let si = &self.schur_inv[i];
            sigma[i] = symmetrize(&(si + si * &sigma[i + 1] * si * n4));
        }
        sigma
    }

    /// Solves `L X = R` for a block right-hand side given as one `d×k`
    /// matrix per interior node.
    pub fn solve(&self, rhs: &[Matrix]) -> Vec<Matrix> {
        let m = self.n - 1;
        let mut y: Vec<Matrix> = Vec::with_capacity(m);
        // Forward: C y = r with C_{i,i−1} = W_i = off·C_{i−1}^{−T}.
        for i in 0..m {
            let mut r = rhs[i].clone();
            if i > 0 {
                let wy = self.apply_w(i, &y[i - 1]);
                r -= wy;
            }
            let yi = self.chol[i]
                .solve_lower_triangular(&r)
                .expect("Cholesky factor has a positive diagonal");
            y.push(yi);
        }
        self.back_substitute(y)
    }

    /// Solves `Cᵀ x = y` by backward substitution.
    pub fn back_substitute(&self, mut y: Vec<Matrix>) -> Vec<Matrix> {
        let m = self.n - 1;
        for i in (0..m).rev() {
            let mut r = y[i].clone();
            if i + 1 < m {
                let wt = self.apply_w_transpose(i + 1, &y[i + 1]);
                r -= wt;
            }
            y[i] = self.chol[i]
                .tr_solve_lower_triangular(&r)
                .expect("Cholesky factor has a positive diagonal");
        }
        y
    }

    /// `C_i^{−T}` for interior index `i` (0-based).
    pub(crate) fn chol_inverse_transpose(&self, i: usize) -> Matrix {
        let d = self.d;
        self.chol[i]
            .tr_solve_lower_triangular(&Matrix::identity(d, d))
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `W_iᵀ = off·C_{i−1}^{−1}`; zero for `i = 0`.
    pub(crate) fn w_transpose(&self, i: usize) -> Matrix {
        let d = self.d;
        if i == 0 {
            return Matrix::zeros(d, d);
        }
        self.apply_w_transpose(i, &Matrix::identity(d, d))
    }

    // W_i x = off · C_{i−1}^{−T} x
    fn apply_w(&self, i: usize, x: &Matrix) -> Matrix {
        self.chol[i - 1]
            .tr_solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal")
            * self.off
    }

    // W_iᵀ x = off · C_{i−1}^{−1} x
    fn apply_w_transpose(&self, i: usize, x: &Matrix) -> Matrix {
        self.chol[i - 1]
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal")
            * self.off
    }
}

/// Diagonal blocks `G(t_i, t_i)` at interior nodes `i = 1..n−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenDiagonal {
    n: usize,
    blocks: Vec<Matrix>,
}

impl GreenDiagonal {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Blocks for interior nodes, node `i` at index `i−1`.
    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Block at grid node `i`; zero at the boundary nodes.
    pub fn at_node(&self, i: usize) -> Matrix {
        if i == 0 || i >= self.n {
            let d = self.blocks[0].nrows();
            Matrix::zeros(d, d)
        } else {
            self.blocks[i - 1].clone()
        }
    }

    /// Blocks for all `n+1` grid nodes, zero at both ends.
    pub fn with_boundary(&self) -> Vec<Matrix> {
        (0..=self.n).map(|i| self.at_node(i)).collect()
    }
}

/// Green's tensor on the grid diagonal, `n·diag(L⁻¹)`, in `O(n·d³)`.
pub fn green_diagonal(op: &SchrodingerOperator) -> Result<GreenDiagonal> {
    let f = op.factorize()?;
    Ok(green_diagonal_from(&f))
}

pub(crate) fn green_diagonal_from(f: &BlockCholesky) -> GreenDiagonal {
    let n = f.n() as f64;
    GreenDiagonal {
        n: f.n(),
        blocks: f.inverse_diagonal().into_iter().map(|m| m * n).collect(),
    }
}

/// Column `G(·, t_s)` at all interior nodes: solves `L·col = n·I` placed at
/// interior node `s_index`.
pub fn green_column(op: &SchrodingerOperator, s_index: usize) -> Result<Vec<Matrix>> {
    let n = op.n();
    if s_index == 0 || s_index >= n {
        return Err(Error::IndexOutOfRange {
            index: s_index,
            lo: 1,
            hi: n - 1,
        });
    }
    let f = op.factorize()?;
    Ok(green_column_from(&f, s_index))
}

pub(crate) fn green_column_from(f: &BlockCholesky, s_index: usize) -> Vec<Matrix> {
    let d = f.dim();
    let mut rhs = vec![Matrix::zeros(d, d); f.n() - 1];
    rhs[s_index - 1] = Matrix::identity(d, d) * f.n() as f64;
    f.solve(&rhs)
}

/// Fundamental matrix `M(t, s)` of `z′ = −ε⁻¹A(t)z` on the grid, stored as
/// `M̄(t_i) = M(1, t_i)` together with the one-step propagators.
///
/// Entries of `M̄` decay like `e^{−a(1−t)/ε}` and may underflow to zero for
/// small `ε`; in one dimension the logarithm of `M̄` is kept as well so that
/// the log-determinant survives.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    n: usize,
    eps: f64,
    steps: Vec<Matrix>,
    inverse_steps: Vec<Matrix>,
    mbar: Vec<Matrix>,
    log_scalar: Option<Vec<f64>>,
}

/// Propagates `M̄` backward from `t = 1` with midpoint exponential steps
/// `E_i = exp(−ε⁻¹Δt·(A_i + A_{i+1})/2)`.
pub fn fundamental_matrix(a: &FieldGrid, eps: f64) -> Result<FundamentalMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let n = a.n();
    let d = a.dim();
    let dt = 1.0 / n as f64;
    let mids: Vec<Matrix> = a
        .values()
        .windows(2)
        .map(|w| (&w[0] + &w[1]) * 0.5)
        .collect();
    let steps: Vec<Matrix> = mids.iter().map(|m| sym_exp(m, -dt / eps)).collect();
    let inverse_steps: Vec<Matrix> = mids.iter().map(|m| sym_exp(m, dt / eps)).collect();
    let mut mbar = vec![Matrix::identity(d, d); n + 1];
    for i in (0..n).rev() {
        mbar[i] = &mbar[i + 1] * &steps[i];
    }
    let log_scalar = (d == 1).then(|| {
        let mut l = vec![0.0; n + 1];
        for i in (0..n).rev() {
            l[i] = l[i + 1] - dt / eps * mids[i][(0, 0)];
        }
        l
    });
    Ok(FundamentalMatrix {
        n,
        eps,
        steps,
        inverse_steps,
        mbar,
        log_scalar,
    })
}

impl FundamentalMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `M̄(t_i) = M(1, t_i)` for every node.
    pub fn mbar(&self) -> &[Matrix] {
        &self.mbar
    }

    /// `M(t_j, t_i)`: the map from the state at `t_i` to the state at `t_j`.
    /// Backward in time (`j < i`) the inverse steps are used.
    pub fn propagator(&self, j: usize, i: usize) -> Matrix {
        let d = self.mbar[0].nrows();
        let mut m = Matrix::identity(d, d);
        if j >= i {
            for k in i..j {
                m = &self.steps[k] * m;
            }
        } else {
            for k in (j..i).rev() {
                m = &self.inverse_steps[k] * m;
            }
        }
        m
    }

    /// `log ∫₀¹ M̄ M̄ᵀ dt` (log-determinant), by trapezoid.
    pub fn log_det_gram(&self) -> Result<f64> {
        if let Some(l) = &self.log_scalar {
            // log Σ wᵢ e^{2lᵢ} with trapezoid weights
            let n = self.n as f64;
            let terms: Vec<f64> = l
                .iter()
                .enumerate()
                .map(|(i, li)| {
                    let w = if i == 0 || i == self.n { 0.5 / n } else { 1.0 / n };
                    w.ln() + 2.0 * li
                })
                .collect();
            let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
            return Ok(top + sum.ln());
        }
        let d = self.mbar[0].nrows();
        let mut gram = Matrix::zeros(d, d);
        let n = self.n as f64;
        for (i, m) in self.mbar.iter().enumerate() {
            let w = if i == 0 || i == self.n { 0.5 / n } else { 1.0 / n };
            gram += m * m.transpose() * w;
        }
        let chol = symmetrize(&gram).cholesky().ok_or_else(|| {
            Error::LogDetUnderflow(format!(
                "Gram matrix of the fundamental matrix is not positive definite at eps = {}",
                self.eps
            ))
        })?;
        let l = chol.l();
        let logdet: f64 = (0..d).map(|k| 2.0 * l[(k, k)].ln()).sum();
        if !logdet.is_finite() {
            return Err(Error::LogDetUnderflow(format!(
                "non-finite log-determinant at eps = {}",
                self.eps
            )));
        }
        Ok(logdet)
    }
}

/// `(ε/2)·log det ∫₀¹ M̄ M̄ᵀ dt`.
pub fn log_det_term(fm: &FundamentalMatrix, eps: f64) -> Result<f64> {
    Ok(0.5 * eps * fm.log_det_gram()?)
}

/// `∫₀¹ Tr A dt` by trapezoid.
pub fn trace_integral(a: &FieldGrid) -> f64 {
    let tr: Vec<f64> = a.values().iter().map(|m| m.trace()).collect();
    trapezoid(&tr, a.n()).expect("field has n+1 nodes")
}
