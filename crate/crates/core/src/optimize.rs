//! Minimization of `F̄_ε` (or the full KL objective) over paths and fields by
//! alternating a path step with the field frozen and a field step with the
//! path frozen.
//!
//! The path step is Armijo descent preconditioned with the Gauss–Newton
//! metric of the objective (discrete kinetic Laplacian plus node blocks).
//! In `fbar` mode the field step is the closed form `A = |D²V(m)|`; in
//! `full_kl` mode it is projected descent on the node entries of `A` with
//! finite-difference gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{armijo_descent, BlockTridiag, DescentSettings};
use crate::error::{Error, Result};
use crate::functionals::{
    check_gamma, closed_form_a, fbar, ginzburg_landau, kinetic_integral, kl_objective,
    kl_objective_with_rule, limit_f, node_sqrt_cov, quadratic_penalty, regularizer,
    GammaLimitValue, KLBreakdown, QuasipotentialCache,
};
use crate::gaussian_bridge::GaussianPathMeasure;
use crate::grid::{BVStepPath, FieldGrid, PathGrid};
use crate::linalg::{project_spd_floor, symmetrize, Matrix, Vector};
use crate::potential::{CriticalKind, PotentialModel};
use crate::quadrature::NormalRule;

/// Which objective the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Fbar,
    FullKl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    pub armijo_c: f64,
    pub step_init: f64,
    pub step_shrink: f64,
    /// Tolerance on `n·max_i |∂F/∂m_i|`, i.e. on the discrete first variation.
    pub grad_tol: f64,
    pub floor_a: f64,
    pub gamma: f64,
    pub quad_order: usize,
    pub objective: Objective,
    /// Outer loop stops once the objective decreases by less than this.
    pub outer_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_outer: 500,
            max_inner: 2000,
            armijo_c: 1e-4,
            step_init: 1.0,
            step_shrink: 0.5,
            grad_tol: 1e-6,
            floor_a: 1e-3,
            gamma: crate::functionals::DEFAULT_GAMMA,
            quad_order: crate::quadrature::DEFAULT_GH_ORDER,
            objective: Objective::Fbar,
            outer_tol: 1e-10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive".into());
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if !(self.step_init > 0.0) {
            return bad(format!("step_init must be positive, got {}", self.step_init));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad(format!("step_shrink must lie in (0, 1), got {}", self.step_shrink));
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.floor_a > 0.0) {
            return bad(format!("floor_a must be positive, got {}", self.floor_a));
        }
        if !(self.outer_tol >= 0.0) {
            return bad(format!("outer_tol must be non-negative, got {}", self.outer_tol));
        }
        check_gamma(self.gamma)?;
        if self.quad_order < crate::functionals::MIN_QUAD_ORDER {
            return bad(format!(
                "quad_order must be at least {}, got {}",
                crate::functionals::MIN_QUAD_ORDER,
                self.quad_order
            ));
        }
        Ok(())
    }

    fn descent(&self, n: usize) -> DescentSettings {
        DescentSettings {
            max_iter: self.max_inner,
            armijo_c: self.armijo_c,
            step_init: self.step_init,
            step_shrink: self.step_shrink,
            grad_tol: self.grad_tol,
            grad_scale: n as f64,
            max_shrinks: MAX_SHRINKS,
            stall_tol: 0.0,
            stall_window: 0,
        }
    }
}

/// Backtracking halvings before a line search is declared failed.
pub const MAX_SHRINKS: usize = 60;

/// Distance within which a path endpoint counts as a critical point.
pub const ENDPOINT_TOL: f64 = 1e-8;

/// Radius of the neighbourhood counted as "at a saddle".
pub const SADDLE_RADIUS: f64 = 0.1;

/// One outer iteration of [`alternate_minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    /// Objective after the field step: `F̄_ε + ε^γ‖A‖²_{H¹}` in `fbar` mode,
    /// the KL total in `full_kl` mode.
    pub objective: f64,
    pub fbar: f64,
    pub e_eps: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    /// `max_i ‖A_new(t_i) − A_old(t_i)‖_F`.
    pub a_delta: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub line_search_failed: bool,
    /// Accepted step lengths of the path step.
    pub steps: Vec<f64>,
    /// Objective values of the path step, starting value first.
    pub inner_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<OuterRecord>,
    pub converged: bool,
}

/// Outcome of a single path step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStepReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub line_search_failed: bool,
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub m: PathGrid,
    pub a: FieldGrid,
    pub trace: OptimizationTrace,
    /// Final KL breakdown in `full_kl` mode.
    pub kl: Option<KLBreakdown>,
}

fn check_pair(p: &PotentialModel, m: &PathGrid, a: &FieldGrid) -> Result<()> {
    if p.dim() != m.dim() || a.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: m.dim(),
        });
    }
    if m.n() != a.n() {
        return Err(Error::LengthMismatch {
            expected: m.n() + 1,
            got: a.n() + 1,
        });
    }
    Ok(())
}

fn kinetic_grad(m: &PathGrid, eps: f64, i: usize) -> Vector {
    let v = m.values();
    (&v[i] * 2.0 - &v[i - 1] - &v[i + 1]) * (0.5 * eps * m.n() as f64)
}

/// Gradient of the discrete `F̄_ε` with respect to the interior nodes
/// `m_1 .. m_{n−1}`.
pub fn grad_m_fbar(p: &PotentialModel, m: &PathGrid, a: &FieldGrid, eps: f64) -> Result<Vec<Vector>> {
    check_pair(p, m, a)?;
    let n = m.n();
    let nf = n as f64;
    (1..n)
        .into_par_iter()
        .map(|i| {
            let x = &m.values()[i];
            let ai = &a.values()[i];
            let h = p.hessian(x);
            let g = p.grad(x);
            let mut out = kinetic_grad(m, eps, i) + &h * &g / (2.0 * eps * nf);
            let chol = ai
                .clone()
                .cholesky()
                .ok_or_else(|| Error::InvalidParameter("field matrix is not positive definite".into()))?;
            let ainv_y = chol.solve(&(&h - ai));
            let t = p.third(x);
            for k in 0..p.dim() {
                out[k] += (t.slice(k) * &ainv_y).trace() / (2.0 * nf);
            }
            Ok(out)
        })
        .collect()
}

fn flatten(blocks: &[Vector]) -> Vector {
    let d = blocks[0].len();
    let mut out = Vector::zeros(blocks.len() * d);
    for (i, b) in blocks.iter().enumerate() {
        out.rows_mut(i * d, d).copy_from(b);
    }
    out
}

/// Gauss–Newton metric of `F̄_ε` (or of the KL path terms) at `m`.
fn path_preconditioner(p: &PotentialModel, m: &PathGrid, a: Option<&FieldGrid>, eps: f64) -> BlockTridiag {
    let n = m.n();
    let nf = n as f64;
    let d = m.dim();
    let diag = (1..n)
        .into_par_iter()
        .map(|i| {
            let x = &m.values()[i];
            let h = p.hessian(x);
            let mut blk = Matrix::identity(d, d) * (eps * nf) + &h * &h / (2.0 * eps * nf);
            if let Some(a) = a {
                if let Some(chol) = a.values()[i].clone().cholesky() {
                    let t = p.third(x);
                    let slices: Vec<Matrix> = (0..d).map(|k| t.slice(k)).collect();
                    let solved: Vec<Matrix> = slices.iter().map(|s| chol.solve(s)).collect();
                    for k in 0..d {
                        for l in 0..d {
                            blk[(k, l)] += (&slices[k] * &solved[l]).trace() / (2.0 * nf);
                        }
                    }
                }
            }
            symmetrize(&blk)
        })
        .collect();
    BlockTridiag {
        diag,
        off: -0.5 * eps * nf,
    }
}

/// Minimizes over the interior of the path with the field frozen.
pub fn minimize_path(
    p: &PotentialModel,
    m0: &PathGrid,
    a: &FieldGrid,
    eps: f64,
    cfg: &OptimizerConfig,
) -> Result<(PathGrid, PathStepReport)> {
    cfg.validate()?;
    check_pair(p, m0, a)?;
    match cfg.objective {
        Objective::Fbar => minimize_path_fbar(p, m0, a, eps, cfg),
        Objective::FullKl => {
            let gm = GaussianPathMeasure::new(m0.clone(), a.clone(), eps)?;
            minimize_path_kl(p, &gm, cfg)
        }
    }
}

fn minimize_path_fbar(
    p: &PotentialModel,
    m0: &PathGrid,
    a: &FieldGrid,
    eps: f64,
    cfg: &OptimizerConfig,
) -> Result<(PathGrid, PathStepReport)> {
    let res = armijo_descent(
        m0.interior_flat(),
        |x| fbar(p, &m0.with_interior_flat(x), a, eps).unwrap_or(f64::INFINITY),
        |x| {
            grad_m_fbar(p, &m0.with_interior_flat(x), a, eps)
                .map(|g| flatten(&g))
                .unwrap_or_else(|_| Vector::from_element(x.len(), f64::NAN))
        },
        |x| path_preconditioner(p, &m0.with_interior_flat(x), Some(a), eps),
        cfg.descent(m0.n()),
    );
    Ok((
        m0.with_interior_flat(&res.x),
        PathStepReport {
            iterations: res.iterations,
            grad_norm: res.grad_norm,
            converged: res.converged,
            line_search_failed: res.line_search_failed,
            steps: res.steps,
            values: res.values,
        },
    ))
}

// Path-dependent part of the KL objective: (ε/4)∫|m′|² + (1/(2ε))∫E Ψ_ε(m+z).
fn kl_path_terms(
    p: &PotentialModel,
    m: &PathGrid,
    roots: &[Matrix],
    eps: f64,
    rule: &NormalRule,
) -> f64 {
    let vals: Vec<f64> = m
        .values()
        .par_iter()
        .zip(roots.par_iter())
        .map(|(x, s)| rule.expect(x, s, |y| p.psi_eps(y, eps)))
        .collect();
    let n = m.n();
    let trap = (0.5 * (vals[0] + vals[n]) + vals[1..n].iter().sum::<f64>()) / n as f64;
    0.25 * eps * kinetic_integral(m) + trap / (2.0 * eps)
}

// ∇Ψ_ε = D²V∇V − ε∇ΔV
fn grad_psi(p: &PotentialModel, y: &Vector, eps: f64) -> Vector {
    let t = p.third(y);
    let d = p.dim();
    let lap_grad = Vector::from_fn(d, |k, _| (0..d).map(|j| t.get(j, j, k)).sum());
    p.hessian(y) * p.grad(y) - lap_grad * eps
}

fn kl_path_grad(
    p: &PotentialModel,
    m: &PathGrid,
    roots: &[Matrix],
    eps: f64,
    rule: &NormalRule,
) -> Vector {
    let n = m.n();
    let nf = n as f64;
    let d = m.dim();
    let blocks: Vec<Vector> = (1..n)
        .into_par_iter()
        .map(|i| {
            let x = &m.values()[i];
            let s = &roots[i];
            let mut e = Vector::zeros(d);
            for (z, w) in rule.points().iter().zip(rule.weights()) {
                e += grad_psi(p, &(x + s * z), eps) * *w;
            }
            kinetic_grad(m, eps, i) + e / (2.0 * eps * nf)
        })
        .collect();
    flatten(&blocks)
}

fn minimize_path_kl(
    p: &PotentialModel,
    gm: &GaussianPathMeasure,
    cfg: &OptimizerConfig,
) -> Result<(PathGrid, PathStepReport)> {
    let eps = gm.eps();
    let m0 = gm.mean();
    let rule = NormalRule::for_dim(gm.dim(), cfg.quad_order);
    let roots = node_sqrt_cov(gm.green())?;
    let res = armijo_descent(
        m0.interior_flat(),
        |x| kl_path_terms(p, &m0.with_interior_flat(x), &roots, eps, &rule),
        |x| kl_path_grad(p, &m0.with_interior_flat(x), &roots, eps, &rule),
        |x| path_preconditioner(p, &m0.with_interior_flat(x), None, eps),
        cfg.descent(m0.n()),
    );
    Ok((
        m0.with_interior_flat(&res.x),
        PathStepReport {
            iterations: res.iterations,
            grad_norm: res.grad_norm,
            converged: res.converged,
            line_search_failed: res.line_search_failed,
            steps: res.steps,
            values: res.values,
        },
    ))
}

fn field_delta(a: &FieldGrid, b: &FieldGrid) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Number of projected descent steps on the field per outer iteration in
/// `full_kl` mode.
pub const KL_FIELD_STEPS: usize = 10;

fn kl_total(p: &PotentialModel, m: &PathGrid, a: &FieldGrid, eps: f64, gamma: f64, rule: &NormalRule) -> f64 {
    GaussianPathMeasure::new(m.clone(), a.clone(), eps)
        .and_then(|gm| kl_objective_with_rule(&gm, p, gamma, rule))
        .map(|k| k.total)
        .unwrap_or(f64::INFINITY)
}

/// Node-independent curvature added to the field metric.
pub const FIELD_METRIC_SHIFT: f64 = 0.5;

// Solves (c·W + 2ε^γ(W + nL)) v = g per matrix entry, where W holds the
// trapezoid weights and L is the path-graph Laplacian: the metric of the
// H¹ regularizer plus a shift, applied to the raw node gradient.
fn field_direction(pairs: &[(usize, usize, usize)], grads: &[f64], n: usize, d: usize, eps: f64, gamma: f64) -> Vec<f64> {
    let reg = 2.0 * eps.powf(gamma);
    let nf = n as f64;
    let per_node = d * (d + 1) / 2;
    let diag: Vec<Matrix> = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 / nf } else { 1.0 / nf };
            let degree = if i == 0 || i == n { 1.0 } else { 2.0 };
            Matrix::from_element(1, 1, (FIELD_METRIC_SHIFT + reg) * w + reg * nf * degree)
        })
        .collect();
    let metric = BlockTridiag { diag, off: -reg * nf };
    let mut out = vec![0.0; grads.len()];
    for e in 0..per_node {
        let (_, r, c) = pairs[e];
        let g = Vector::from_fn(n + 1, |i, _| grads[i * per_node + e]);
        let v = metric.solve(&g).unwrap_or(g);
        // an off-diagonal entry appears twice in A
        let scale = if r == c { 1.0 } else { 0.5 };
        for i in 0..=n {
            out[i * per_node + e] = scale * v[i];
        }
    }
    out
}

// Projected descent on the upper-triangular node entries of A with
// central finite-difference gradients.
fn kl_field_step(
    p: &PotentialModel,
    m: &PathGrid,
    a0: &FieldGrid,
    eps: f64,
    cfg: &OptimizerConfig,
    rule: &NormalRule,
) -> Result<FieldGrid> {
    let d = a0.dim();
    let n = a0.n();
    let pairs: Vec<(usize, usize, usize)> = (0..=n)
        .flat_map(|i| (0..d).flat_map(move |r| (r..d).map(move |c| (i, r, c))))
        .collect();
    let mut a = a0.clone();
    let mut fa = kl_total(p, m, &a, eps, cfg.gamma, rule);
    for _ in 0..KL_FIELD_STEPS {
        let grads: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, r, c)| {
                let h = 1e-6 * (1.0 + a.values()[i][(r, c)].abs());
                let bump = |sign: f64| {
                    let mut vals = a.values().to_vec();
                    vals[i][(r, c)] += sign * h;
                    if r != c {
                        vals[i][(c, r)] += sign * h;
                    }
                    FieldGrid::new(vals, a.floor_a())
                        .map(|f| kl_total(p, m, &f, eps, cfg.gamma, rule))
                        .unwrap_or(f64::INFINITY)
                };
                let (fp, fm) = (bump(1.0), bump(-1.0));
                if fp.is_finite() && fm.is_finite() {
                    (fp - fm) / (2.0 * h)
                } else {
                    0.0
                }
            })
            .collect();
        let dir = field_direction(&pairs, &grads, n, d, eps, cfg.gamma);
        let slope: f64 = -grads.iter().zip(&dir).map(|(g, v)| g * v).sum::<f64>();
        let mut step = cfg.step_init;
        let mut accepted = None;
        for _ in 0..=MAX_SHRINKS {
            let mut vals = a.values().to_vec();
            for (&(i, r, c), v) in pairs.iter().zip(&dir) {
                vals[i][(r, c)] -= step * v;
                if r != c {
                    vals[i][(c, r)] = vals[i][(r, c)];
                }
            }
            let projected = vals
                .iter()
                .map(|v| project_spd_floor(&symmetrize(v), a.floor_a()))
                .collect::<Result<Vec<Matrix>>>()?;
            let trial = FieldGrid::new(projected, a.floor_a())?;
            let ft = kl_total(p, m, &trial, eps, cfg.gamma, rule);
            if ft <= fa + cfg.armijo_c * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= cfg.step_shrink;
        }
        match accepted {
            Some((trial, ft)) => {
                let done = fa - ft < cfg.outer_tol;
                a = trial;
                fa = ft;
                if done {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(a)
}

/// Alternates a path step (field frozen) with a field step (path frozen)
/// until the objective decreases by less than `cfg.outer_tol`.
pub fn alternate_minimize(
    p: &PotentialModel,
    m0: &PathGrid,
    eps: f64,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let mut m = m0.clone();
    let mut a = closed_form_a(p, &m, cfg.floor_a)?;
    let rule = NormalRule::for_dim(p.dim(), cfg.quad_order);
    let mut records = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut kl = None;
    for outer in 0..cfg.max_outer {
        let (m_new, report) = minimize_path(p, &m, &a, eps, cfg)?;
        m = m_new;
        let a_new = match cfg.objective {
            Objective::Fbar => closed_form_a(p, &m, cfg.floor_a)?,
            Objective::FullKl => kl_field_step(p, &m, &a, eps, cfg, &rule)?,
        };
        let a_delta = field_delta(&a_new, &a);
        a = a_new;
        let e_eps = ginzburg_landau(p, &m, eps)?;
        let penalty = quadratic_penalty(p, &m, &a)?;
        let fb = e_eps + penalty;
        let (objective, monitored) = match cfg.objective {
            Objective::Fbar => (fb + regularizer(&a, eps, cfg.gamma), fb),
            Objective::FullKl => {
                let gm = GaussianPathMeasure::new(m.clone(), a.clone(), eps)?;
                let k = kl_objective(&gm, p, cfg.gamma, cfg.quad_order)?;
                kl = Some(k);
                (k.total, k.total)
            }
        };
        let g = grad_m_fbar(p, &m, &a, eps)?;
        let grad_norm = g.iter().map(|v| v.amax()).fold(0.0, f64::max) * m.n() as f64;
        records.push(OuterRecord {
            outer,
            objective,
            fbar: fb,
            e_eps,
            penalty,
            grad_norm,
            a_delta,
            inner_iterations: report.iterations,
            inner_converged: report.converged,
            line_search_failed: report.line_search_failed,
            steps: report.steps,
            inner_values: report.values,
        });
        if prev - monitored < cfg.outer_tol {
            converged = true;
            break;
        }
        prev = monitored;
    }
    Ok(OptimizationResult {
        m,
        a,
        trace: OptimizationTrace { records, converged },
        kl,
    })
}

/// Fraction of grid nodes within [`SADDLE_RADIUS`] of a critical point that
/// is not a minimum.
pub fn saddle_fraction(p: &PotentialModel, m: &PathGrid) -> f64 {
    let targets: Vec<&Vector> = p
        .critical_points()
        .iter()
        .filter(|c| c.kind != CriticalKind::Minimum)
        .map(|c| &c.point)
        .collect();
    let hits = m
        .values()
        .iter()
        .filter(|x| targets.iter().any(|c| (*x - *c).norm() < SADDLE_RADIUS))
        .count();
    hits as f64 / (m.n() + 1) as f64
}

/// Step path obtained by sending every node to its nearest critical point,
/// with jumps placed halfway between nodes where the level changes.
pub fn induced_step_path(p: &PotentialModel, m: &PathGrid) -> Result<BVStepPath> {
    let cps = p.critical_points();
    if cps.is_empty() {
        return Err(Error::InvalidParameter("potential declares no critical points".into()));
    }
    let nearest = |x: &Vector| {
        (0..cps.len())
            .min_by(|&a, &b| (x - &cps[a].point).norm().total_cmp(&(x - &cps[b].point).norm()))
            .expect("non-empty")
    };
    let idx: Vec<usize> = m.values().iter().map(nearest).collect();
    let mut breakpoints = Vec::new();
    let mut levels = vec![cps[idx[0]].point.clone()];
    for i in 1..idx.len() {
        if idx[i] != idx[i - 1] {
            breakpoints.push(0.5 * (m.t(i - 1) + m.t(i)));
            levels.push(cps[idx[i]].point.clone());
        }
    }
    BVStepPath::new(p, breakpoints, levels)
}

/// Smallest grid resolving boundary layers of width `O(ε)`: `n ≥ 20/ε`.
pub fn intervals_for(eps: f64, base_n: usize) -> usize {
    base_n.max((20.0 / eps).ceil() as usize)
}

/// One row of the ε-sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub n: usize,
    pub e_eps: f64,
    pub penalty: f64,
    pub fbar: f64,
    pub regularizer: f64,
    pub saddle_fraction: f64,
    /// Limit functional on the induced step path; `None` unless both
    /// endpoints are declared critical points.
    pub limit: Option<GammaLimitValue>,
    pub outer_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `Φ(x₋, x₊)`, the limit of the minimal energies; `None` unless both
    /// endpoints are declared critical points.
    pub quasipotential: Option<f64>,
    /// Converged path and field for each ε.
    pub solutions: Vec<(PathGrid, FieldGrid)>,
    /// Outer-iteration trace for each ε.
    pub traces: Vec<OptimizationTrace>,
}

/// Runs [`alternate_minimize`] along a decreasing list of ε, warm-starting
/// each run from the previous minimizer resampled onto the new grid.
pub fn gamma_sweep(
    p: &PotentialModel,
    m0: &PathGrid,
    eps_list: &[f64],
    cfg: &OptimizerConfig,
    cache: &QuasipotentialCache,
) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("eps list is empty".into()));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(format!(
                "eps list must be strictly decreasing, got {eps_list:?}"
            )));
        }
    }
    if !eps_list.iter().all(|&e| e > 0.0) {
        return Err(Error::InvalidParameter("eps values must be positive".into()));
    }
    let x_minus = m0.x_minus().clone();
    let x_plus = m0.x_plus().clone();
    let critical_ends = p.critical_index(&x_minus, ENDPOINT_TOL).is_some()
        && p.critical_index(&x_plus, ENDPOINT_TOL).is_some();
    let phi = if critical_ends {
        Some(cache.get(p, &x_minus, &x_plus)?)
    } else {
        None
    };
    let mut m = m0.clone();
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    let mut traces = Vec::new();
    for &eps in eps_list {
        let n = intervals_for(eps, m0.n());
        if n != m.n() {
            m = m.resample(n)?;
        }
        let res = alternate_minimize(p, &m, eps, cfg)?;
        let limit = if critical_ends {
            let step = induced_step_path(p, &res.m)?;
            Some(limit_f(p, &step, &res.a, &x_minus, &x_plus, cache)?)
        } else {
            None
        };
        let e_eps = ginzburg_landau(p, &res.m, eps)?;
        let penalty = quadratic_penalty(p, &res.m, &res.a)?;
        rows.push(SweepRow {
            eps,
            n,
            e_eps,
            penalty,
            fbar: e_eps + penalty,
            regularizer: regularizer(&res.a, eps, cfg.gamma),
            saddle_fraction: saddle_fraction(p, &res.m),
            limit,
            outer_iterations: res.trace.records.len(),
            converged: res.trace.converged,
        });
        m = res.m.clone();
        solutions.push((res.m, res.a));
        traces.push(res.trace);
    }
    Ok(SweepReport {
        rows,
        quasipotential: phi,
        solutions,
        traces,
    })
}
