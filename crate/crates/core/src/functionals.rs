//! Path and field functionals: Onsager–Machlup, Freidlin–Wentzell,
//! Ginzburg–Landau, the quadratic field penalty, the Gaussian KL objective and
//! its simplified form, the quasi-potential and the Γ-limit functional.
//!
//! All integrals over `[0,1]` use the grid's trapezoid rule for node terms and
//! interval sums for the kinetic term `∫|m′|²`.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{armijo_descent, BlockTridiag, DescentSettings};
use crate::error::{Error, Result};
use crate::gaussian_bridge::GaussianPathMeasure;
use crate::greens::{log_det_term, trace_integral, GreenDiagonal};
use crate::grid::{field_derivative, path_derivative, trapezoid, BVStepPath, FieldGrid, PathGrid};
use crate::linalg::{frobenius_dot, project_spd_floor, sym_abs, sym_sqrt_psd, trace_mul_inv, trace_sandwich_inv, Matrix, Vector};
use crate::potential::{CriticalKind, PotentialModel};
use crate::quadrature::NormalRule;

/// Default regularization exponent.
pub const DEFAULT_GAMMA: f64 = 0.25;

/// Relative change of the Gaussian expectation under quadrature-order
/// doubling above which the result is rejected.
pub const QUAD_REFINE_TOL: f64 = 1e-4;

/// Smallest Gauss–Hermite order accepted for `d ≤ 2`.
pub const MIN_QUAD_ORDER: usize = 8;

/// Default horizon and resolution for quasi-potential computations.
pub const DEFAULT_QP_HORIZON: f64 = 20.0;
pub const DEFAULT_QP_INTERVALS: usize = 2000;

/// Stopping tolerance on `max_i |∂𝒥/∂m_i| / h`. The transition time is a soft
/// mode with exponentially small curvature in `T`; the value is converged to
/// about 1e-6 relative well before the gradient along that mode vanishes.
pub const QP_GRAD_TOL: f64 = 1e-6;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    Ok(())
}

fn check_same_grid(m: &PathGrid, a: &FieldGrid) -> Result<()> {
    if m.n() != a.n() {
        return Err(Error::LengthMismatch {
            expected: m.n() + 1,
            got: a.n() + 1,
        });
    }
    if m.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: a.dim(),
        });
    }
    Ok(())
}

fn check_model_dim(p: &PotentialModel, m: &PathGrid) -> Result<()> {
    if p.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: m.dim(),
        });
    }
    Ok(())
}

fn trap(values: &[f64]) -> f64 {
    trapezoid(values, values.len() - 1).expect("n+1 node values")
}

/// `∫₀¹ |m′|² dt` from forward differences.
pub fn kinetic_integral(m: &PathGrid) -> f64 {
    let n = m.n() as f64;
    path_derivative(m).iter().map(|v| v.norm_squared()).sum::<f64>() / n
}

/// `I_ε(m) = ½∫(½|m′|² + Ψ_ε(m)) dt`.
pub fn onsager_machlup(p: &PotentialModel, m: &PathGrid, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    check_model_dim(p, m)?;
    let psi: Vec<f64> = m.values().iter().map(|x| p.psi_eps(x, eps)).collect();
    Ok(0.25 * kinetic_integral(m) + 0.5 * trap(&psi))
}

/// The two forms of the Freidlin–Wentzell action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// `S̄_T = ¼∫|m′ + ∇V(m)|²`
    SBar,
    /// `S_T = ¼∫(|m′|² + |∇V(m)|²)`
    S,
}

/// Freidlin–Wentzell action of a path sampled uniformly on `[0, T]`.
///
/// Both forms use interval midpoints for `∇V`, so that
/// `S̄ − S = ½∫m′·∇V(m)` reproduces `½(V(x₊) − V(x₋))` to third order per step.
pub fn freidlin_wentzell(p: &PotentialModel, m: &PathGrid, kind: ActionKind, horizon_t: f64) -> Result<f64> {
    if !(horizon_t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon_t}"
        )));
    }
    check_model_dim(p, m)?;
    let dt = horizon_t / m.n() as f64;
    let total: f64 = m
        .values()
        .windows(2)
        .map(|w| {
            let v = (&w[1] - &w[0]) / dt;
            let g = p.grad(&((&w[0] + &w[1]) * 0.5));
            match kind {
                ActionKind::SBar => (v + g).norm_squared(),
                ActionKind::S => v.norm_squared() + g.norm_squared(),
            }
        })
        .sum();
    Ok(0.25 * dt * total)
}

/// `E_ε(m) = (ε/4)∫|m′|² + (1/(4ε))∫|∇V(m)|²`.
pub fn ginzburg_landau(p: &PotentialModel, m: &PathGrid, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    check_model_dim(p, m)?;
    let g2: Vec<f64> = m.values().iter().map(|x| p.grad(x).norm_squared()).collect();
    Ok(0.25 * eps * kinetic_integral(m) + trap(&g2) / (4.0 * eps))
}

/// `Tr((B − A)² A⁻¹)` for symmetric `B` and SPD `A`.
pub fn penalty_integrand(b: &Matrix, a: &Matrix) -> Result<f64> {
    trace_sandwich_inv(&(b - a), a).ok_or_else(|| {
        Error::InvalidParameter("field matrix is not positive definite".into())
    })
}

/// Minimum of `A ↦ Tr((B − A)² A⁻¹)` over SPD `A`: `2(Tr|B| − Tr B)`,
/// attained at `A = |B|` when `B` is non-singular.
pub fn optimal_penalty_value(b: &Matrix) -> f64 {
    2.0 * (sym_abs(b).trace() - b.trace())
}

/// `¼∫Tr((D²V(m) − A)² A⁻¹) dt`.
pub fn quadratic_penalty(p: &PotentialModel, m: &PathGrid, a: &FieldGrid) -> Result<f64> {
    check_model_dim(p, m)?;
    check_same_grid(m, a)?;
    let vals = m
        .values()
        .iter()
        .zip(a.values())
        .map(|(x, ai)| penalty_integrand(&p.hessian(x), ai))
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.25 * trap(&vals))
}

/// Node-wise `|D²V(m(t_i))|`, lifted to the spectral floor.
pub fn closed_form_a(p: &PotentialModel, m: &PathGrid, floor_a: f64) -> Result<FieldGrid> {
    check_model_dim(p, m)?;
    let vals = m
        .values()
        .iter()
        .map(|x| project_spd_floor(&sym_abs(&p.hessian(x)), floor_a))
        .collect::<Result<Vec<Matrix>>>()?;
    FieldGrid::new(vals, floor_a)
}

/// `F̄_ε(m, A) = E_ε(m) + ¼∫Tr((D²V(m) − A)² A⁻¹)`.
pub fn fbar(p: &PotentialModel, m: &PathGrid, a: &FieldGrid, eps: f64) -> Result<f64> {
    Ok(ginzburg_landau(p, m, eps)? + quadratic_penalty(p, m, a)?)
}

/// Discrete `‖A‖²_{H¹} = ∫|A|²_F + ∫|A′|²_F`.
pub fn h1_norm_sq(a: &FieldGrid) -> f64 {
    let l2: Vec<f64> = a.values().iter().map(|m| m.norm_squared()).collect();
    let d1: Vec<f64> = field_derivative(a).iter().map(|m| m.norm_squared()).collect();
    trap(&l2) + trap(&d1)
}

/// `ε^γ‖A‖²_{H¹}`.
pub fn regularizer(a: &FieldGrid, eps: f64, gamma: f64) -> f64 {
    eps.powf(gamma) * h1_norm_sq(a)
}

/// `¼∫Tr((D³V(m)·∇V(m)) A⁻¹) dt` with `(D³V·∇V)_ij = Σ_k ∂_ijk V ∂_k V`.
pub fn third_order_term(p: &PotentialModel, m: &PathGrid, a: &FieldGrid) -> Result<f64> {
    check_model_dim(p, m)?;
    check_same_grid(m, a)?;
    let vals = m
        .values()
        .iter()
        .zip(a.values())
        .map(|(x, ai)| {
            let c = p.third(x).contract_last(&p.grad(x));
            trace_mul_inv(&c, ai)
                .ok_or_else(|| Error::InvalidParameter("field matrix is not positive definite".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.25 * trap(&vals))
}

/// `F̄_ε + ¼∫Tr((D³V·∇V)A⁻¹) + ε^γ‖A‖²_{H¹}`.
pub fn simplified_f(p: &PotentialModel, m: &PathGrid, a: &FieldGrid, eps: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(fbar(p, m, a, eps)? + third_order_term(p, m, a)? + regularizer(a, eps, gamma))
}

/// The additive parts of the ε-scaled KL objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KLBreakdown {
    /// `(1/(2ε))∫E Ψ_ε(m + z)`
    pub expectation_psi: f64,
    /// `(ε/4)∫|m′|²`
    pub kinetic: f64,
    /// `−(ε/2)∫B_ε : G(t,t)`
    pub quad_expect: f64,
    /// `½∫Tr A`
    pub trace_term: f64,
    /// `(ε/2) log det ∫M̄M̄ᵀ`
    pub logdet_term: f64,
    /// `ε^γ‖A‖²_{H¹}`
    pub regularizer: f64,
    pub total: f64,
}

impl KLBreakdown {
    /// Sum of the parts that depend on the field only.
    pub fn field_part(&self) -> f64 {
        self.quad_expect + self.trace_term + self.logdet_term + self.regularizer
    }
}

/// `E[Ψ_ε(m(t_i) + z(t_i))]` with `z(t_i) ~ N(0, 2G(t_i,t_i))` at every node
/// (the boundary nodes carry no fluctuation).
pub fn expected_psi_nodes(
    p: &PotentialModel,
    m: &PathGrid,
    green: &GreenDiagonal,
    eps: f64,
    rule: &NormalRule,
) -> Result<Vec<f64>> {
    node_expectations(m, green, rule, |x| p.psi_eps(x, eps))
}

pub(crate) fn node_sqrt_cov(green: &GreenDiagonal) -> Result<Vec<Matrix>> {
    (0..=green.n())
        .map(|i| sym_sqrt_psd(&(green.at_node(i) * 2.0)).ok_or(Error::NotPsd(i)))
        .collect()
}

fn node_expectations(
    m: &PathGrid,
    green: &GreenDiagonal,
    rule: &NormalRule,
    f: impl Fn(&Vector) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let roots = node_sqrt_cov(green)?;
    Ok(m.values()
        .par_iter()
        .zip(roots.par_iter())
        .map(|(x, s)| rule.expect(x, s, &f))
        .collect())
}

fn breakdown_with_rule(
    gm: &GaussianPathMeasure,
    p: &PotentialModel,
    gamma: f64,
    rule: &NormalRule,
) -> Result<KLBreakdown> {
    let eps = gm.eps();
    let m = gm.mean();
    let a = gm.field();
    let e_psi = trap(&expected_psi_nodes(p, m, gm.green(), eps, rule)?) / (2.0 * eps);
    let kinetic = 0.25 * eps * kinetic_integral(m);
    let bg: Vec<f64> = (0..=gm.n())
        .map(|i| {
            if i == 0 || i == gm.n() {
                0.0
            } else {
                frobenius_dot(&gm.operator().b_nodes()[i - 1], &gm.green().at_node(i))
            }
        })
        .collect();
    let quad_expect = -0.5 * eps * trap(&bg);
    let trace_term = 0.5 * trace_integral(a);
    let logdet = log_det_term(gm.fundamental(), eps)?;
    let reg = regularizer(a, eps, gamma);
    Ok(KLBreakdown {
        expectation_psi: e_psi,
        kinetic,
        quad_expect,
        trace_term,
        logdet_term: logdet,
        regularizer: reg,
        total: e_psi + kinetic + quad_expect + trace_term + logdet + reg,
    })
}

/// ε-scaled KL objective of the Gaussian measure against the bridge law, up
/// to the normalization of the bridge law.
///
/// For `d ≤ 2` the Gaussian expectations use tensor Gauss–Hermite of order
/// `quad_order` and are recomputed at twice the order; a relative change above
/// [`QUAD_REFINE_TOL`] is reported as [`Error::UnderResolved`]. For `d ≥ 3`
/// shifted Halton quasi-Monte Carlo is used.
pub fn kl_objective(gm: &GaussianPathMeasure, p: &PotentialModel, gamma: f64, quad_order: usize) -> Result<KLBreakdown> {
    check_gamma(gamma)?;
    check_model_dim(p, gm.mean())?;
    let d = gm.dim();
    if d <= crate::quadrature::MAX_TENSOR_DIM && quad_order < MIN_QUAD_ORDER {
        return Err(Error::InvalidParameter(format!(
            "quadrature order must be at least {MIN_QUAD_ORDER}, got {quad_order}"
        )));
    }
    let rule = NormalRule::for_dim(d, quad_order);
    let out = breakdown_with_rule(gm, p, gamma, &rule)?;
    if d <= crate::quadrature::MAX_TENSOR_DIM {
        let fine = NormalRule::for_dim(d, 2 * quad_order);
        let e2 = trap(&expected_psi_nodes(p, gm.mean(), gm.green(), gm.eps(), &fine)?) / (2.0 * gm.eps());
        let rel = (e2 - out.expectation_psi).abs() / e2.abs().max(1e-12);
        if rel > QUAD_REFINE_TOL {
            return Err(Error::UnderResolved(rel));
        }
    }
    Ok(out)
}

/// KL objective with a caller-supplied rule and no refinement check.
pub(crate) fn kl_objective_with_rule(
    gm: &GaussianPathMeasure,
    p: &PotentialModel,
    gamma: f64,
    rule: &NormalRule,
) -> Result<KLBreakdown> {
    breakdown_with_rule(gm, p, gamma, rule)
}

/// Result of a quasi-potential minimization.
#[derive(Debug, Clone)]
pub struct Quasipotential {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Minimizing path on `[−T, T]`, stored on a unit grid.
    pub path: PathGrid,
    /// `½|V(x_to) − V(x_from)|` when the pair is adjacent and contains an
    /// extremum.
    pub reference: Option<f64>,
}

fn critical_or_err(p: &PotentialModel, x: &Vector) -> Result<usize> {
    p.critical_index(x, 1e-12)
        .ok_or_else(|| Error::NotCritical(x.iter().copied().collect()))
}

fn adjacent(p: &PotentialModel, i: usize, j: usize) -> bool {
    let cps = p.critical_points();
    let (a, b) = (&cps[i].point, &cps[j].point);
    let seg = b - a;
    let len2 = seg.norm_squared();
    cps.iter().enumerate().all(|(k, c)| {
        if k == i || k == j || len2 == 0.0 {
            return true;
        }
        let s = ((&c.point - a).dot(&seg) / len2).clamp(0.0, 1.0);
        (a + &seg * s - &c.point).norm() > 1e-9
    })
}

/// `Φ(x_from, x_to) ≈ inf ¼∫_{−T}^{T}(|m′|² + |∇V(m)|²)` over paths pinned at
/// the two critical points, by preconditioned Armijo descent from the straight
/// line.
pub fn quasipotential(
    p: &PotentialModel,
    x_from: &Vector,
    x_to: &Vector,
    horizon_t: f64,
    n: usize,
) -> Result<Quasipotential> {
    if !(horizon_t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon_t}"
        )));
    }
    let i = critical_or_err(p, x_from)?;
    let j = critical_or_err(p, x_to)?;
    let line = PathGrid::linear(x_from, x_to, n)?;
    if i == j {
        return Ok(Quasipotential {
            value: 0.0,
            converged: true,
            iterations: 0,
            path: line,
            reference: Some(0.0),
        });
    }
    let cps = p.critical_points();
    let extremum = |k: usize| matches!(cps[k].kind, CriticalKind::Minimum | CriticalKind::Maximum);
    let reference = ((extremum(i) || extremum(j)) && adjacent(p, i, j))
        .then(|| 0.5 * (p.value(x_to) - p.value(x_from)).abs());

    let h = 2.0 * horizon_t / n as f64;
    let d = p.dim();
    let objective = |flat: &Vector| {
        let m = line.with_interior_flat(flat);
        let kin: f64 = m.values().windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum();
        let pot: f64 = m.values()[1..n].iter().map(|x| p.grad(x).norm_squared()).sum();
        0.25 * kin / h + 0.25 * h * pot
    };
    let gradient = |flat: &Vector| {
        let m = line.with_interior_flat(flat);
        let v = m.values();
        let mut g = Vector::zeros((n - 1) * d);
        for k in 1..n {
            let lap = (&v[k] * 2.0 - &v[k - 1] - &v[k + 1]) * (0.5 / h);
            let pot = p.hessian(&v[k]) * p.grad(&v[k]) * (0.5 * h);
            g.rows_mut((k - 1) * d, d).copy_from(&(lap + pot));
        }
        g
    };
    let precond = |flat: &Vector| {
        let m = line.with_interior_flat(flat);
        let diag = m.values()[1..n]
            .iter()
            .map(|x| {
                let hs = p.hessian(x);
                Matrix::identity(d, d) / h + &hs * &hs * (0.5 * h)
            })
            .collect();
        BlockTridiag { diag, off: -0.5 / h }
    };
    let res = armijo_descent(
        line.interior_flat(),
        objective,
        gradient,
        precond,
        DescentSettings {
            max_iter: 20_000,
            armijo_c: 1e-4,
            step_init: 1.0,
            step_shrink: 0.5,
            grad_tol: QP_GRAD_TOL,
            grad_scale: 1.0 / h,
            max_shrinks: 60,
            stall_tol: 1e-10,
            stall_window: 100,
        },
    );
    Ok(Quasipotential {
        value: res.value,
        converged: res.converged || res.stalled,
        iterations: res.iterations,
        path: line.with_interior_flat(&res.x),
        reference,
    })
}

/// Memoized quasi-potential values keyed by critical-point indices.
#[derive(Debug)]
pub struct QuasipotentialCache {
    horizon_t: f64,
    n: usize,
    values: Mutex<HashMap<(usize, usize), f64>>,
}

impl Default for QuasipotentialCache {
    fn default() -> Self {
        Self::new(DEFAULT_QP_HORIZON, DEFAULT_QP_INTERVALS)
    }
}

impl QuasipotentialCache {
    pub fn new(horizon_t: f64, n: usize) -> Self {
        Self {
            horizon_t,
            n,
            values: Mutex::new(HashMap::new()),
        }
    }

    /// `Φ(x_from, x_to)`; computed on first use.
    pub fn get(&self, p: &PotentialModel, x_from: &Vector, x_to: &Vector) -> Result<f64> {
        let key = (critical_or_err(p, x_from)?, critical_or_err(p, x_to)?);
        if key.0 == key.1 {
            return Ok(0.0);
        }
        if let Some(v) = self.values.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = quasipotential(p, x_from, x_to, self.horizon_t, self.n)?.value;
        self.values.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

/// Value of the Γ-limit functional on a step path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLimitValue {
    pub jump_energy: f64,
    pub penalty: f64,
    pub total: f64,
}

/// `Φ(x₋, m(0⁺)) + Σ_τ Φ(m(τ⁻), m(τ⁺)) + Φ(m(1⁻), x₊)` plus
/// `¼∫Tr((D²V(m) − A)² A⁻¹)` with `D²V` taken at the step levels.
pub fn limit_f(
    p: &PotentialModel,
    m: &BVStepPath,
    a: &FieldGrid,
    x_minus: &Vector,
    x_plus: &Vector,
    cache: &QuasipotentialCache,
) -> Result<GammaLimitValue> {
    let levels = m.levels();
    let mut jump = cache.get(p, x_minus, &levels[0])?;
    for w in levels.windows(2) {
        jump += cache.get(p, &w[0], &w[1])?;
    }
    jump += cache.get(p, &levels[levels.len() - 1], x_plus)?;
    let vals = (0..=a.n())
        .map(|i| penalty_integrand(&p.hessian(m.level_at(a.t(i))), &a.values()[i]))
        .collect::<Result<Vec<f64>>>()?;
    let penalty = 0.25 * trap(&vals);
    Ok(GammaLimitValue {
        jump_energy: jump,
        penalty,
        total: jump + penalty,
    })
}
