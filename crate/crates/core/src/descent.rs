//! Preconditioned Armijo descent over the interior nodes of a pinned path.
//!
//! The preconditioner is a symmetric positive definite block-tridiagonal
//! matrix with scalar off-diagonal coupling (a discrete Laplacian plus node
//! blocks), solved by block elimination.

use crate::linalg::{symmetrize, Matrix, Vector};

/// `P = tridiag(o·I, D_i, o·I)` with `d×d` diagonal blocks.
#[derive(Debug, Clone)]
pub(crate) struct BlockTridiag {
    pub diag: Vec<Matrix>,
    pub off: f64,
}

impl BlockTridiag {
    /// Solves `P x = r` for a flat node-major right-hand side.
    pub fn solve(&self, r: &Vector) -> Option<Vector> {
        let m = self.diag.len();
        let d = self.diag[0].nrows();
        let o = self.off;
        let mut s_inv: Vec<Matrix> = Vec::with_capacity(m);
        let mut y: Vec<Vector> = Vec::with_capacity(m);
        for i in 0..m {
            let mut s = self.diag[i].clone();
            let mut yi = r.rows(i * d, d).into_owned();
            if i > 0 {
                s -= &s_inv[i - 1] * (o * o);
                yi -= &s_inv[i - 1] * &y[i - 1] * o;
            }
            let inv = symmetrize(&s).cholesky()?.inverse();
            s_inv.push(inv);
            y.push(yi);
        }
        let mut x = Vector::zeros(m * d);
        let mut next: Option<Vector> = None;
        for i in (0..m).rev() {
            let mut rhs = y[i].clone();
            if let Some(nx) = &next {
                rhs -= nx * o;
            }
            let xi = &s_inv[i] * rhs;
            x.rows_mut(i * d, d).copy_from(&xi);
            next = Some(xi);
        }
        Some(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentSettings {
    pub max_iter: usize,
    pub armijo_c: f64,
    pub step_init: f64,
    pub step_shrink: f64,
    pub grad_tol: f64,
    /// Multiplies the gradient before the stopping test (e.g. `n` to undo the
    /// quadrature weight of one node).
    pub grad_scale: f64,
    pub max_shrinks: usize,
    /// Stop once the objective decreases by less than `stall_tol·|f|` over
    /// `stall_window` accepted steps; zero disables the test.
    pub stall_tol: f64,
    pub stall_window: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct DescentResult {
    pub x: Vector,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Stopped on the stagnation test rather than the gradient test.
    pub stalled: bool,
    pub line_search_failed: bool,
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
}

/// Minimizes `f` from `x0` along `−P⁻¹∇f` with Armijo backtracking.
/// Falls back to the plain gradient if the preconditioner fails.
pub(crate) fn armijo_descent(
    x0: Vector,
    f: impl Fn(&Vector) -> f64,
    grad: impl Fn(&Vector) -> Vector,
    precond: impl Fn(&Vector) -> BlockTridiag,
    s: DescentSettings,
) -> DescentResult {
    let mut x = x0;
    let mut fx = f(&x);
    let mut steps = Vec::new();
    let mut values = vec![fx];
    let mut converged = false;
    let mut stalled = false;
    let mut line_search_failed = false;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < s.max_iter {
        let g = grad(&x);
        grad_norm = g.amax() * s.grad_scale;
        if grad_norm < s.grad_tol {
            converged = true;
            break;
        }
        let mut dir = precond(&x).solve(&(-&g)).unwrap_or_else(|| -&g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            dir = -&g;
            slope = -g.norm_squared();
        }
        let mut alpha = s.step_init;
        let mut accepted = None;
        for _ in 0..=s.max_shrinks {
            let trial = &x + &dir * alpha;
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + s.armijo_c * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= s.step_shrink;
        }
        iterations += 1;
        match accepted {
            Some((trial, ft)) => {
                let decrease = fx - ft;
                x = trial;
                steps.push(alpha);
                values.push(ft);
                if decrease <= 4.0 * f64::EPSILON * fx.abs().max(1e-300) {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                fx = ft;
                if stalls >= 3 {
                    stalled = true;
                    break;
                }
                let w = s.stall_window;
                if s.stall_tol > 0.0 && w > 0 && values.len() > w {
                    let past = values[values.len() - 1 - w];
                    if past - fx <= s.stall_tol * fx.abs() {
                        stalled = true;
                        break;
                    }
                }
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }
    if !converged && iterations >= s.max_iter {
        let g = grad(&x);
        grad_norm = g.amax() * s.grad_scale;
        converged = grad_norm < s.grad_tol;
    }
    DescentResult {
        x,
        value: fx,
        grad_norm,
        iterations,
        converged,
        stalled,
        line_search_failed,
        steps,
        values,
    }
}
