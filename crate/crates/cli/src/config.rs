//! Run configuration: a TOML document with one section per concern.
//!
//! Unknown keys are rejected at every level, and every numeric range is
//! checked by [`RunConfig::validate`] before any computation starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transpath::grid::FieldGrid;
use transpath::linalg::{Matrix, Vector};
use transpath::{builtin_potential, OptimizerConfig, PathGrid, PotentialModel};

use crate::error::CliError;

/// Absolute tolerance for matching an endpoint to a declared critical point.
pub const CRITICAL_TOL: f64 = 1e-8;

/// Subcommands, used to decide which sections are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Minimize,
    KlEval,
    SampleBridge,
    GreenDiag,
    GammaSweep,
    Quasipotential,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Minimize => "minimize",
            Command::KlEval => "kl-eval",
            Command::SampleBridge => "sample-bridge",
            Command::GreenDiag => "green-diag",
            Command::GammaSweep => "gamma-sweep",
            Command::Quasipotential => "quasipotential",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub potential: PotentialSection,
    pub path: PathSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub sample_bridge: SampleBridgeSection,
    #[serde(default)]
    pub quasipotential: QuasipotentialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Optional cross-check of the dimension implied by the potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathShape {
    /// Straight line from `x_minus` to `x_plus`.
    #[default]
    Linear,
    /// Straight line plus `amplitude·sin(πt)` in every component.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub x_minus: Vec<f64>,
    pub x_plus: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub shape: PathShape,
    #[serde(default)]
    pub amplitude: f64,
}

fn default_n() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `A = |D²V(m)|` lifted to the spectral floor.
    #[default]
    ClosedForm,
    /// The same symmetric matrix at every node.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default)]
    pub kind: FieldKind,
    /// Row-major `d×d` matrix, required when `kind = "constant"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBridgeSection {
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_count() -> usize {
    100
}

impl Default for SampleBridgeSection {
    fn default() -> Self {
        Self { count: default_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasipotentialSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_qp_n")]
    pub n: usize,
}

fn default_horizon() -> f64 {
    20.0
}

fn default_qp_n() -> usize {
    2000
}

impl Default for QuasipotentialSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            n: default_qp_n(),
        }
    }
}

/// Inputs resolved and checked against each other.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub potential: PotentialModel,
    pub x_minus: Vector,
    pub x_plus: Vector,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every section needed by `cmd`.
    pub fn validate(&self, cmd: Command) -> Result<Resolved, CliError> {
        let potential = builtin_potential(&self.potential.name, &self.potential.params)?;
        let d = potential.dim();
        if let Some(want) = self.potential.d {
            if want != d {
                return Err(invalid(format!(
                    "potential.d = {want} but `{}` has dimension {d}",
                    self.potential.name
                )));
            }
        }
        let x_minus = point("path.x_minus", &self.path.x_minus, d)?;
        let x_plus = point("path.x_plus", &self.path.x_plus, d)?;
        if self.path.n < 4 {
            return Err(invalid(format!("path.n must be at least 4, got {}", self.path.n)));
        }
        if !self.path.amplitude.is_finite() {
            return Err(invalid("path.amplitude must be finite".into()));
        }
        if self.path.shape == PathShape::Linear && self.path.amplitude != 0.0 {
            return Err(invalid("path.amplitude requires shape = \"sine\"".into()));
        }
        self.optimizer.validate()?;
        if let Some(eps) = self.numerics.eps {
            check_eps("numerics.eps", eps)?;
        }
        if let Some(list) = &self.numerics.eps_list {
            for &e in list {
                check_eps("numerics.eps_list", e)?;
            }
        }
        if let Some(m) = &self.field.matrix {
            self.constant_field_matrix(m, d)?;
        }
        if self.field.kind == FieldKind::Constant && self.field.matrix.is_none() {
            return Err(invalid("field.kind = \"constant\" requires field.matrix".into()));
        }
        match cmd {
            Command::Minimize | Command::KlEval | Command::SampleBridge | Command::GreenDiag => {
                if self.numerics.eps.is_none() {
                    return Err(invalid(format!("{} requires numerics.eps", cmd.name())));
                }
            }
            Command::GammaSweep => {
                let list = self
                    .numerics
                    .eps_list
                    .as_ref()
                    .ok_or_else(|| invalid("gamma-sweep requires numerics.eps_list".into()))?;
                if list.is_empty() {
                    return Err(invalid("numerics.eps_list is empty".into()));
                }
                if list.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(invalid(format!(
                        "numerics.eps_list must be strictly decreasing, got {list:?}"
                    )));
                }
            }
            Command::Quasipotential => {}
        }
        if matches!(cmd, Command::Minimize | Command::GammaSweep | Command::Quasipotential) {
            for (label, x) in [("path.x_minus", &x_minus), ("path.x_plus", &x_plus)] {
                if potential.critical_index(x, CRITICAL_TOL).is_none() {
                    return Err(invalid(format!(
                        "{label} = {:?} is not a declared critical point of `{}`",
                        x.as_slice(),
                        self.potential.name
                    )));
                }
            }
        }
        if matches!(cmd, Command::GammaSweep | Command::Quasipotential) {
            let q = &self.quasipotential;
            if !(q.horizon.is_finite() && q.horizon > 0.0) {
                return Err(invalid(format!(
                    "quasipotential.horizon must be positive, got {}",
                    q.horizon
                )));
            }
            if q.n < 4 {
                return Err(invalid(format!("quasipotential.n must be at least 4, got {}", q.n)));
            }
        }
        if cmd == Command::SampleBridge && self.sample_bridge.count == 0 {
            return Err(invalid("sample_bridge.count must be positive".into()));
        }
        Ok(Resolved {
            potential,
            x_minus,
            x_plus,
        })
    }

    /// The single-ε value; present after validation for the commands that need it.
    pub fn eps(&self) -> f64 {
        self.numerics.eps.expect("validated eps")
    }

    /// Initial path on `path.n` intervals.
    pub fn initial_path(&self, r: &Resolved) -> Result<PathGrid, CliError> {
        let amp = self.path.amplitude;
        let grid = match self.path.shape {
            PathShape::Linear => PathGrid::linear(&r.x_minus, &r.x_plus, self.path.n)?,
            PathShape::Sine => PathGrid::from_fn(&r.x_minus, &r.x_plus, self.path.n, |t| {
                let base = &r.x_minus + (&r.x_plus - &r.x_minus) * t;
                base.add_scalar(amp * (std::f64::consts::PI * t).sin())
            })?,
        };
        Ok(grid)
    }

    /// The field used by `kl-eval`, `sample-bridge` and `green-diag`.
    pub fn field_for(&self, r: &Resolved, m: &PathGrid) -> Result<FieldGrid, CliError> {
        let floor = self.optimizer.floor_a;
        let a = match self.field.kind {
            FieldKind::ClosedForm => transpath::functionals::closed_form_a(&r.potential, m, floor)?,
            FieldKind::Constant => {
                let rows = self.field.matrix.as_ref().expect("validated matrix");
                let mat = self.constant_field_matrix(rows, r.potential.dim())?;
                FieldGrid::constant(&mat, m.n(), floor)?
            }
        };
        Ok(a)
    }

    fn constant_field_matrix(&self, rows: &[Vec<f64>], d: usize) -> Result<Matrix, CliError> {
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(invalid(format!("field.matrix must be {d}×{d}")));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("field.matrix entries must be finite".into()));
        }
        let m = Matrix::from_fn(d, d, |i, j| rows[i][j]);
        FieldGrid::constant(&m, 4, self.optimizer.floor_a)?;
        Ok(m)
    }
}

fn invalid(msg: String) -> CliError {
    CliError::Invalid(msg)
}

fn point(label: &str, x: &[f64], d: usize) -> Result<Vector, CliError> {
    if x.len() != d {
        return Err(invalid(format!("{label} has {} components, expected {d}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{label} must be finite")));
    }
    Ok(Vector::from_column_slice(x))
}

fn check_eps(label: &str, eps: f64) -> Result<(), CliError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("{label} values must be positive, got {eps}")));
    }
    Ok(())
}
