//! Potentials `V : ℝᵈ → ℝ` with the derivatives the path functionals need.
//!
//! A [`PotentialModel`] wraps any [`Potential`] implementation together with its
//! declared critical points. Critical points are inputs, not searched for; use
//! [`PotentialModel::validate_critical_points`] to check gradient residuals.
//!
//! The growth, coercivity and monotonicity conditions a potential is expected to
//! satisfy (polynomial growth of Ψ_ε and its third derivatives, `V → ∞` at
//! infinity, `2ΔV ≤ |∇V|²` far out, eventually monotone `|∇V|`) are contracts
//! of the caller and are not checked at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tensor3, Vector};

/// A smooth potential with analytic gradient and Hessian.
///
/// `third` defaults to central differences of `hessian` with step
/// `h = 1e-4·(1+|x|)`.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;

    fn third(&self, x: &Vector) -> Tensor3 {
        fd_third(self, x)
    }
}

/// Central finite differences of the Hessian, `T_ijk ≈ ∂_k H_ij`.
pub fn fd_third<P: Potential + ?Sized>(p: &P, x: &Vector) -> Tensor3 {
    let d = p.dim();
    let h = 1e-4 * (1.0 + x.norm());
    let mut t = Tensor3::zeros(d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let dh = (p.hessian(&xp) - p.hessian(&xm)) / (2.0 * h);
        for i in 0..d {
            for j in 0..d {
                t.set(i, j, k, 0.5 * (dh[(i, j)] + dh[(j, i)]));
            }
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Saddle,
    Maximum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub point: Vector,
    pub kind: CriticalKind,
}

impl CriticalPoint {
    pub fn new(point: Vec<f64>, kind: CriticalKind) -> Self {
        Self {
            point: Vector::from_vec(point),
            kind,
        }
    }
}

/// Default residual tolerance for declared critical points.
pub const CRITICAL_RESIDUAL_TOL: f64 = 1e-8;

/// A potential together with its declared critical set and growth exponent.
#[derive(Clone)]
pub struct PotentialModel {
    name: String,
    potential: Arc<dyn Potential>,
    critical_points: Vec<CriticalPoint>,
    growth_alpha: f64,
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("critical_points", &self.critical_points)
            .field("growth_alpha", &self.growth_alpha)
            .finish()
    }
}

impl PotentialModel {
    pub fn new(
        name: impl Into<String>,
        potential: Arc<dyn Potential>,
        critical_points: Vec<CriticalPoint>,
        growth_alpha: f64,
    ) -> Result<Self> {
        if !(0.0..2.0).contains(&growth_alpha) {
            return Err(Error::InvalidParameter(format!(
                "growth exponent must lie in [0, 2), got {growth_alpha}"
            )));
        }
        let d = potential.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        for c in &critical_points {
            if c.point.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.point.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            potential,
            critical_points,
            growth_alpha,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn growth_alpha(&self) -> f64 {
        self.growth_alpha
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.potential.value(x)
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        self.potential.grad(x)
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        self.potential.hessian(x)
    }

    pub fn third(&self, x: &Vector) -> Tensor3 {
        self.potential.third(x)
    }

    pub fn laplacian(&self, x: &Vector) -> f64 {
        self.hessian(x).trace()
    }

    /// `Ψ_ε(x) = ½|∇V(x)|² − ε ΔV(x)`.
    pub fn psi_eps(&self, x: &Vector, eps: f64) -> f64 {
        0.5 * self.grad(x).norm_squared() - eps * self.laplacian(x)
    }

    /// Index of the declared critical point within `tol` of `x`, if any.
    pub fn critical_index(&self, x: &Vector, tol: f64) -> Option<usize> {
        self.critical_points
            .iter()
            .position(|c| (&c.point - x).amax() <= tol)
    }

    /// Checks `|∇V(c)| < tol` at every declared critical point.
    pub fn validate_critical_points(&self, tol: f64) -> Result<()> {
        for c in &self.critical_points {
            if self.grad(&c.point).norm() >= tol {
                return Err(Error::NotCritical(c.point.iter().copied().collect()));
            }
        }
        Ok(())
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key).copied().or(default) {
        Some(v) => Ok(v),
        None => Err(Error::InvalidParameter(format!("missing parameter `{key}`"))),
    }
}

fn reject_unknown(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParameter(format!("unknown parameter `{key}`")));
        }
    }
    Ok(())
}

/// Names accepted by [`builtin_potential`].
pub const BUILTIN_NAMES: [&str; 3] = ["double_well_1d", "quadratic", "double_well_planar"];

/// Builds one of the reference potentials.
///
/// * `double_well_1d`: `V(x) = ¼x²(1−x)²`, no parameters.
/// * `quadratic`: `V(x) = ½λ|x|²`, parameters `lambda` (default 1) and `d` (default 1).
/// * `double_well_planar`: `V(x,y) = ¼x²(1−x)² + ½κy²`, parameter `kappa` (default 1).
pub fn builtin_potential(name: &str, params: &BTreeMap<String, f64>) -> Result<PotentialModel> {
    match name {
        "double_well_1d" => {
            reject_unknown(params, &[])?;
            PotentialModel::new(
                name,
                Arc::new(DoubleWell1d),
                vec![
                    CriticalPoint::new(vec![0.0], CriticalKind::Minimum),
                    CriticalPoint::new(vec![0.5], CriticalKind::Maximum),
                    CriticalPoint::new(vec![1.0], CriticalKind::Minimum),
                ],
                0.0,
            )
        }
        "quadratic" => {
            reject_unknown(params, &["lambda", "d"])?;
            let lambda = param(params, "lambda", Some(1.0))?;
            let d = param(params, "d", Some(1.0))?;
            if !(lambda > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "lambda must be positive, got {lambda}"
                )));
            }
            if !(d >= 1.0 && d.fract() == 0.0 && d <= 8.0) {
                return Err(Error::InvalidParameter(format!(
                    "d must be an integer in 1..=8, got {d}"
                )));
            }
            let d = d as usize;
            PotentialModel::new(
                name,
                Arc::new(Quadratic { lambda, dim: d }),
                vec![CriticalPoint::new(vec![0.0; d], CriticalKind::Minimum)],
                0.0,
            )
        }
        "double_well_planar" => {
            reject_unknown(params, &["kappa"])?;
            let kappa = param(params, "kappa", Some(1.0))?;
            if !(kappa > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "kappa must be positive, got {kappa}"
                )));
            }
            PotentialModel::new(
                name,
                Arc::new(DoubleWellPlanar { kappa }),
                vec![
                    CriticalPoint::new(vec![0.0, 0.0], CriticalKind::Minimum),
                    CriticalPoint::new(vec![0.5, 0.0], CriticalKind::Saddle),
                    CriticalPoint::new(vec![1.0, 0.0], CriticalKind::Minimum),
                ],
                0.0,
            )
        }
        other => Err(Error::UnknownPotential(other.to_string())),
    }
}

// ¼x²(1−x)² and its derivatives.
fn dw_value(x: f64) -> f64 {
    0.25 * x * x * (1.0 - x) * (1.0 - x)
}
fn dw_d1(x: f64) -> f64 {
    0.5 * x * (1.0 - x) * (1.0 - 2.0 * x)
}
fn dw_d2(x: f64) -> f64 {
    0.5 - 3.0 * x + 3.0 * x * x
}
fn dw_d3(x: f64) -> f64 {
    6.0 * x - 3.0
}

/// `V(x) = ¼x²(1−x)²`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell1d;

impl Potential for DoubleWell1d {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &Vector) -> f64 {
        dw_value(x[0])
    }
    fn grad(&self, x: &Vector) -> Vector {
        Vector::from_element(1, dw_d1(x[0]))
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        Matrix::from_element(1, 1, dw_d2(x[0]))
    }
    fn third(&self, x: &Vector) -> Tensor3 {
        let mut t = Tensor3::zeros(1);
        t.set(0, 0, 0, dw_d3(x[0]));
        t
    }
}

/// `V(x) = ½λ|x|²`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub lambda: f64,
    pub dim: usize,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.lambda * x.norm_squared()
    }
    fn grad(&self, x: &Vector) -> Vector {
        x * self.lambda
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        Matrix::identity(self.dim, self.dim) * self.lambda
    }
    fn third(&self, _x: &Vector) -> Tensor3 {
        Tensor3::zeros(self.dim)
    }
}

/// `V(x, y) = ¼x²(1−x)² + ½κy²`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWellPlanar {
    pub kappa: f64,
}

impl Potential for DoubleWellPlanar {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &Vector) -> f64 {
        dw_value(x[0]) + 0.5 * self.kappa * x[1] * x[1]
    }
    fn grad(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![dw_d1(x[0]), self.kappa * x[1]])
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[dw_d2(x[0]), 0.0, 0.0, self.kappa])
    }
    fn third(&self, x: &Vector) -> Tensor3 {
        let mut t = Tensor3::zeros(2);
        t.set(0, 0, 0, dw_d3(x[0]));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::asymmetry;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    fn none() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn psi_at_double_well_points() {
        let p = builtin_potential("double_well_1d", &none()).unwrap();
        // V'(0) = 0, V''(0) = ½  ⇒  Ψ = −0.1·½
        assert!((p.psi_eps(&v(&[0.0]), 0.1) + 0.05).abs() < 1e-15);
        assert_eq!(p.psi_eps(&v(&[0.5]), 0.0), 0.0);
    }

    #[test]
    fn psi_for_quadratic_in_two_dimensions() {
        let params = BTreeMap::from([("d".to_string(), 2.0)]);
        let p = builtin_potential("quadratic", &params).unwrap();
        assert!((p.psi_eps(&v(&[0.0, 0.0]), 0.2) + 0.4).abs() < 1e-15);
        assert_eq!(p.hessian(&v(&[0.3, -1.2])), Matrix::identity(2, 2));
        assert_eq!(p.critical_points().len(), 1);
    }

    #[test]
    fn double_well_critical_set() {
        let p = builtin_potential("double_well_1d", &none()).unwrap();
        let pts: Vec<f64> = p.critical_points().iter().map(|c| c.point[0]).collect();
        assert_eq!(pts, vec![0.0, 0.5, 1.0]);
        assert!((p.value(&v(&[0.5])) - 1.0 / 64.0).abs() < 1e-16);
        p.validate_critical_points(CRITICAL_RESIDUAL_TOL).unwrap();
    }

    #[test]
    fn planar_saddle_hessian() {
        let params = BTreeMap::from([("kappa".to_string(), 1.0)]);
        let p = builtin_potential("double_well_planar", &params).unwrap();
        let h = p.hessian(&v(&[0.5, 0.0]));
        assert!((h[(0, 0)] + 0.25).abs() < 1e-15);
        assert!((h[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(h[(0, 1)], 0.0);
        p.validate_critical_points(CRITICAL_RESIDUAL_TOL).unwrap();
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin_potential("mexican_hat", &none()),
            Err(Error::UnknownPotential(_))
        ));
        let bad = BTreeMap::from([("lambda".to_string(), -1.0)]);
        assert!(builtin_potential("quadratic", &bad).is_err());
        let bad = BTreeMap::from([("kappa".to_string(), 0.0)]);
        assert!(builtin_potential("double_well_planar", &bad).is_err());
        let typo = BTreeMap::from([("lamda".to_string(), 1.0)]);
        assert!(builtin_potential("quadratic", &typo).is_err());
    }

    #[test]
    fn fd_third_matches_analytic() {
        let p = DoubleWellPlanar { kappa: 2.0 };
        let x = v(&[0.3, -0.7]);
        let fd = fd_third(&p, &x);
        let exact = p.third(&x);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!((fd.get(i, j, k) - exact.get(i, j, k)).abs() < 1e-7);
                }
            }
        }
        assert!(asymmetry(&p.hessian(&x)) < 1e-12);
        assert_eq!(exact.asymmetry_first_pair(), 0.0);
    }
}
