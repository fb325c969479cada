//! Gaussian path measures `N(m, 2(−∂ₜ² + B_ε)⁻¹)` and exact sampling of the
//! pinned Ornstein–Uhlenbeck fluctuation `z`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greens::{
    assemble_operator, fundamental_matrix, green_column_from, green_diagonal_from, trace_integral,
    BlockCholesky, FundamentalMatrix, GreenDiagonal, SchrodingerOperator,
};
use crate::grid::{FieldGrid, PathGrid};
use crate::linalg::{sym_spectral_norm, sym_sqrt_psd, Matrix};

/// The Gaussian measure with mean path `m` and precision `½(−∂ₜ² + B_ε)`,
/// with its factorization, Green's diagonal and fundamental matrix cached.
#[derive(Debug, Clone)]
pub struct GaussianPathMeasure {
    mean: PathGrid,
    field: FieldGrid,
    eps: f64,
    op: SchrodingerOperator,
    factor: BlockCholesky,
    green: GreenDiagonal,
    fundamental: FundamentalMatrix,
}

impl GaussianPathMeasure {
    pub fn new(mean: PathGrid, field: FieldGrid, eps: f64) -> Result<Self> {
        if mean.n() != field.n() {
            return Err(Error::LengthMismatch {
                expected: mean.n() + 1,
                got: field.n() + 1,
            });
        }
        if mean.dim() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: mean.dim(),
                got: field.dim(),
            });
        }
        let op = assemble_operator(&field, eps)?;
        let factor = op.factorize()?;
        let green = green_diagonal_from(&factor);
        let fundamental = fundamental_matrix(&field, eps)?;
        Ok(Self {
            mean,
            field,
            eps,
            op,
            factor,
            green,
            fundamental,
        })
    }

    pub fn mean(&self) -> &PathGrid {
        &self.mean
    }

    pub fn field(&self) -> &FieldGrid {
        &self.field
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.mean.n()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn operator(&self) -> &SchrodingerOperator {
        &self.op
    }

    pub fn green(&self) -> &GreenDiagonal {
        &self.green
    }

    pub fn fundamental(&self) -> &FundamentalMatrix {
        &self.fundamental
    }

    /// Green's tensor column `G(·, t_s)` at interior nodes.
    pub fn green_column(&self, s_index: usize) -> Result<Vec<Matrix>> {
        if s_index == 0 || s_index >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: s_index,
                lo: 1,
                hi: self.n() - 1,
            });
        }
        Ok(green_column_from(&self.factor, s_index))
    }

    /// `max_i ‖G(t_i,t_i)‖₂ / (ε / (2a))`, with `a` the field's spectral floor.
    /// Stays below about one for admissible fields and small `ε`.
    pub fn green_bound_ratio(&self) -> f64 {
        let bound = self.eps / (2.0 * self.field.floor_a());
        self.green
            .blocks()
            .iter()
            .map(sym_spectral_norm)
            .fold(0.0, f64::max)
            / bound
    }
}

/// Sampled fluctuation paths; each sample is an `(n−1)×d` array of interior
/// values, `z(0) = z(1) = 0` being implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSampleBatch {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// Index of the first sample; sample `k` of the batch uses stream `start + k`.
    pub start: u64,
    samples: Vec<f64>,
}

impl BridgeSampleBatch {
    pub fn count(&self) -> usize {
        self.samples.len() / ((self.n - 1) * self.dim)
    }

    /// `z_k(t_i)`, component `c`, for grid node `i`; zero on the boundary.
    pub fn value(&self, k: usize, i: usize, c: usize) -> f64 {
        if i == 0 || i >= self.n {
            return 0.0;
        }
        self.samples[(k * (self.n - 1) + i - 1) * self.dim + c]
    }

    /// Interior values of sample `k`, node-major.
    pub fn sample(&self, k: usize) -> &[f64] {
        let len = (self.n - 1) * self.dim;
        &self.samples[k * len..(k + 1) * len]
    }
}

/// Draws `count` samples of `z ~ N(0, 2G)`; deterministic given `seed` and
/// independent of the thread count.
pub fn sample_bridge(gm: &GaussianPathMeasure, count: usize, seed: u64) -> Result<BridgeSampleBatch> {
    sample_bridge_range(gm, 0, count, seed)
}

/// Samples with global indices `start .. start+count`. Concatenating ranges
/// reproduces a single larger batch exactly.
pub fn sample_bridge_range(
    gm: &GaussianPathMeasure,
    start: u64,
    count: usize,
    seed: u64,
) -> Result<BridgeSampleBatch> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let sampler = BackSolver::new(&gm.factor);
    let len = (gm.n() - 1) * gm.dim();
    let mut samples = vec![0.0; count * len];
    samples
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(k, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(start + k as u64);
            for v in out.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            sampler.solve_in_place(out);
        });
    Ok(BridgeSampleBatch {
        n: gm.n(),
        dim: gm.dim(),
        seed,
        start,
        samples,
    })
}

// Solves Cᵀ x = √(2n)·ξ with precomputed dense blocks:
// x_i = C_i^{−T} (r_i − W_{i+1}ᵀ x_{i+1}).
struct BackSolver {
    d: usize,
    scale: f64,
    ct_inv: Vec<Matrix>,
    wt: Vec<Matrix>,
}

impl BackSolver {
    fn new(f: &BlockCholesky) -> Self {
        let d = f.dim();
        let m = f.n() - 1;
        let mut ct_inv = Vec::with_capacity(m);
        let mut wt = Vec::with_capacity(m);
        for i in 0..m {
            ct_inv.push(f.chol_inverse_transpose(i));
            wt.push(f.w_transpose(i));
        }
        Self {
            d,
            scale: (2.0 * f.n() as f64).sqrt(),
            ct_inv,
            wt,
        }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let d = self.d;
        let m = self.ct_inv.len();
        let mut r = vec![0.0; d];
        for i in (0..m).rev() {
            for a in 0..d {
                r[a] = self.scale * x[i * d + a];
            }
            if i + 1 < m {
                let w = &self.wt[i + 1];
                for a in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        acc += w[(a, b)] * x[(i + 1) * d + b];
                    }
                    r[a] -= acc;
                }
            }
            let c = &self.ct_inv[i];
            for a in 0..d {
                let mut acc = 0.0;
                for b in 0..d {
                    acc += c[(a, b)] * r[b];
                }
                x[i * d + a] = acc;
            }
        }
    }
}

/// `log Z = |x₊ − x₋|²/4 − (1/(2ε))∫Tr A − ½ log det ∫M̄M̄ᵀ`.
///
/// Depends on the field and the endpoints only; used for diagnostics.
pub fn gaussian_log_normalizer(gm: &GaussianPathMeasure) -> Result<f64> {
    let jump = (gm.mean.x_plus() - gm.mean.x_minus()).norm_squared() / 4.0;
    let tr = trace_integral(&gm.field) / (2.0 * gm.eps);
    Ok(jump - tr - 0.5 * gm.fundamental.log_det_gram()?)
}

/// Principal square root of `2G(t_i, t_i)` at interior node `i`.
pub fn marginal_std(gm: &GaussianPathMeasure, node: usize) -> Result<Matrix> {
    if node == 0 || node >= gm.n() {
        return Err(Error::IndexOutOfRange {
            index: node,
            lo: 1,
            hi: gm.n() - 1,
        });
    }
    sym_sqrt_psd(&(gm.green.at_node(node) * 2.0)).ok_or(Error::NotPsd(node))
}
