//! Uniform grids on `[0, 1]` carrying paths and symmetric matrix fields.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eigenvalue, Matrix, Vector, SYMMETRY_TOL};
use crate::potential::PotentialModel;

/// Smallest admissible number of intervals.
pub const MIN_INTERVALS: usize = 4;

/// Default number of intervals.
pub const DEFAULT_INTERVALS: usize = 400;

/// Slack allowed below the spectral floor when validating a field.
pub const FLOOR_SLACK: f64 = 1e-10;

fn check_n(n: usize) -> Result<()> {
    if n < MIN_INTERVALS {
        return Err(Error::GridTooSmall(n));
    }
    Ok(())
}

/// A path `m : [0,1] → ℝᵈ` sampled at `t_i = i/n`, pinned at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    n: usize,
    values: Vec<Vector>,
}

impl PathGrid {
    /// Builds a path from its `n+1` node values; the first and last values are
    /// the anchors `x₋`, `x₊`.
    pub fn new(values: Vec<Vector>) -> Result<Self> {
        let n = values.len().saturating_sub(1);
        check_n(n)?;
        let d = values[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("path dimension must be positive".into()));
        }
        for v in &values {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(Self { n, values })
    }

    /// Straight line from `x_minus` to `x_plus`.
    pub fn linear(x_minus: &Vector, x_plus: &Vector, n: usize) -> Result<Self> {
        if x_minus.len() != x_plus.len() {
            return Err(Error::DimensionMismatch {
                expected: x_minus.len(),
                got: x_plus.len(),
            });
        }
        check_n(n)?;
        let values = (0..=n)
            .map(|i| {
                if i == n {
                    x_plus.clone()
                } else {
                    let t = i as f64 / n as f64;
                    x_minus * (1.0 - t) + x_plus * t
                }
            })
            .collect();
        Self::new(values)
    }

    /// Samples `f` at interior nodes; endpoints are set to the anchors exactly.
    pub fn from_fn(
        x_minus: &Vector,
        x_plus: &Vector,
        n: usize,
        f: impl Fn(f64) -> Vector,
    ) -> Result<Self> {
        check_n(n)?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(x_minus.clone());
        for i in 1..n {
            values.push(f(i as f64 / n as f64));
        }
        values.push(x_plus.clone());
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn x_minus(&self) -> &Vector {
        &self.values[0]
    }

    pub fn x_plus(&self) -> &Vector {
        &self.values[self.n]
    }

    /// Overwrites interior node `i` (`1 ≤ i ≤ n−1`).
    pub fn set_interior(&mut self, i: usize, x: Vector) -> Result<()> {
        if i == 0 || i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                lo: 1,
                hi: self.n - 1,
            });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.values[i] = x;
        Ok(())
    }

    /// Interior values flattened node-major into one vector of length `(n−1)·d`.
    pub fn interior_flat(&self) -> Vector {
        let d = self.dim();
        let mut out = Vector::zeros((self.n - 1) * d);
        for i in 1..self.n {
            out.rows_mut((i - 1) * d, d).copy_from(&self.values[i]);
        }
        out
    }

    /// Replaces the interior from a flat node-major vector.
    pub fn with_interior_flat(&self, flat: &Vector) -> Self {
        let d = self.dim();
        let mut out = self.clone();
        for i in 1..self.n {
            out.values[i] = flat.rows((i - 1) * d, d).into_owned();
        }
        out
    }

    /// Linear interpolation at arbitrary `t ∈ [0,1]`.
    pub fn eval(&self, t: f64) -> Vector {
        let s = (t.clamp(0.0, 1.0) * self.n as f64).min(self.n as f64);
        let i = (s.floor() as usize).min(self.n - 1);
        let w = s - i as f64;
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    /// Resamples onto a grid with `n` intervals by linear interpolation.
    pub fn resample(&self, n: usize) -> Result<Self> {
        Self::from_fn(self.x_minus(), self.x_plus(), n, |t| self.eval(t))
    }
}

/// A field of symmetric `d×d` matrices on the grid nodes, bounded below by
/// `floor_a·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    n: usize,
    values: Vec<Matrix>,
    floor_a: f64,
}

impl FieldGrid {
    pub fn new(values: Vec<Matrix>, floor_a: f64) -> Result<Self> {
        let n = values.len().saturating_sub(1);
        check_n(n)?;
        if !(floor_a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spectral floor must be positive, got {floor_a}"
            )));
        }
        let d = values[0].nrows();
        for (i, m) in values.iter().enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.ncols(),
                });
            }
            let asym = asymmetry(m);
            if asym >= SYMMETRY_TOL * (1.0 + m.amax()) {
                return Err(Error::NotSymmetric(asym));
            }
            let lo = min_eigenvalue(m);
            if lo < floor_a - FLOOR_SLACK {
                return Err(Error::BelowFloor {
                    node: i,
                    min_eig: lo,
                    floor: floor_a,
                });
            }
        }
        Ok(Self { n, values, floor_a })
    }

    pub fn constant(m: &Matrix, n: usize, floor_a: f64) -> Result<Self> {
        check_n(n)?;
        Self::new(vec![m.clone(); n + 1], floor_a)
    }

    pub fn from_fn(n: usize, floor_a: f64, f: impl Fn(f64) -> Matrix) -> Result<Self> {
        check_n(n)?;
        Self::new((0..=n).map(|i| f(i as f64 / n as f64)).collect(), floor_a)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn floor_a(&self) -> f64 {
        self.floor_a
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Piecewise-linear interpolation at arbitrary `t ∈ [0,1]`.
    pub fn eval(&self, t: f64) -> Matrix {
        let s = t.clamp(0.0, 1.0) * self.n as f64;
        let i = (s.floor() as usize).min(self.n - 1);
        let w = s - i as f64;
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    pub fn resample(&self, n: usize) -> Result<Self> {
        Self::from_fn(n, self.floor_a, |t| self.eval(t))
    }
}

/// A piecewise-constant path taking values in the critical set.
#[derive(Debug, Clone, PartialEq)]
pub struct BVStepPath {
    breakpoints: Vec<f64>,
    levels: Vec<Vector>,
}

impl BVStepPath {
    pub fn new(p: &PotentialModel, breakpoints: Vec<f64>, levels: Vec<Vector>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::LengthMismatch {
                expected: breakpoints.len() + 1,
                got: levels.len(),
            });
        }
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !(b > prev && b < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "breakpoints must be increasing in (0, 1), got {breakpoints:?}"
                )));
            }
            prev = b;
        }
        for l in &levels {
            if l.len() != p.dim() {
                return Err(Error::DimensionMismatch {
                    expected: p.dim(),
                    got: l.len(),
                });
            }
            if p.critical_index(l, 1e-12).is_none() {
                return Err(Error::NotCritical(l.iter().copied().collect()));
            }
        }
        Ok(Self { breakpoints, levels })
    }

    /// Single-level path.
    pub fn constant(p: &PotentialModel, level: Vector) -> Result<Self> {
        Self::new(p, Vec::new(), vec![level])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[Vector] {
        &self.levels
    }

    /// Right-continuous value at `t`.
    pub fn level_at(&self, t: f64) -> &Vector {
        let k = self.breakpoints.iter().filter(|&&b| b <= t).count();
        &self.levels[k]
    }

    /// Samples the step path on a grid, with the grid endpoints set to the
    /// given anchors.
    pub fn to_path_grid(&self, x_minus: &Vector, x_plus: &Vector, n: usize) -> Result<PathGrid> {
        PathGrid::from_fn(x_minus, x_plus, n, |t| self.level_at(t).clone())
    }
}

/// Forward differences `n·(m_{i+1} − m_i)`, one per interval.
pub fn path_derivative(m: &PathGrid) -> Vec<Vector> {
    let n = m.n as f64;
    m.values.windows(2).map(|w| (&w[1] - &w[0]) * n).collect()
}

/// Composite trapezoid rule on `n` uniform intervals of `[0,1]`.
pub fn trapezoid(f: &[f64], n: usize) -> Result<f64> {
    if f.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: f.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let inner: f64 = f[1..n].iter().sum();
    Ok((0.5 * (f[0] + f[n]) + inner) / n as f64)
}

/// `A′` at every node: central differences inside, one-sided at the ends.
pub fn field_derivative(a: &FieldGrid) -> Vec<Matrix> {
    let n = a.n;
    let nf = n as f64;
    let v = &a.values;
    (0..=n)
        .map(|i| {
            if i == 0 {
                (&v[1] - &v[0]) * nf
            } else if i == n {
                (&v[n] - &v[n - 1]) * nf
            } else {
                (&v[i + 1] - &v[i - 1]) * (0.5 * nf)
            }
        })
        .collect()
}

/// Writes one row per node: `t, m_1..m_d, A_11, A_12, .., A_dd` with the
/// upper triangle of `A` in row-major order. `A` may be omitted.
pub fn write_grid_csv<W: Write>(out: &mut W, m: &PathGrid, a: Option<&FieldGrid>) -> io::Result<()> {
    let d = m.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("m{k}")));
    if a.is_some() {
        for i in 1..=d {
            for j in i..=d {
                header.push(format!("A{i}{j}"));
            }
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..=m.n() {
        let mut row = vec![fmt_num(m.t(i))];
        row.extend(m.values[i].iter().map(|&x| fmt_num(x)));
        if let Some(a) = a {
            let ai = &a.values[i];
            for r in 0..d {
                for c in r..d {
                    row.push(fmt_num(ai[(r, c)]));
                }
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Formats a float with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
