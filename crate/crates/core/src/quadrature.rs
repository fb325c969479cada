//! Cubature rules for expectations under the standard normal law on ℝᵈ.
//!
//! Gauss–Hermite nodes come from the Golub–Welsch eigenvalue method; for
//! higher dimensions a randomly shifted Halton sequence mapped through the
//! normal quantile function is used instead.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::linalg::{Matrix, Vector};

/// Default Gauss–Hermite order per dimension.
pub const DEFAULT_GH_ORDER: usize = 20;

/// Number of quasi-Monte Carlo points used for `d ≥ 3`.
pub const QMC_POINTS: usize = 1 << 14;

/// Fixed seed of the Cranley–Patterson shift.
pub const QMC_SHIFT_SEED: u64 = 0x005e_ed0f_ca11;

/// Largest dimension handled by tensor Gauss–Hermite.
pub const MAX_TENSOR_DIM: usize = 2;

/// Points `y_k` and weights `w_k` with `E[f(Y)] ≈ Σ w_k f(y_k)` for `Y ~ N(0, I_d)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    points: Vec<Vector>,
    weights: Vec<f64>,
}

impl NormalRule {
    /// Tensor Gauss–Hermite for `d ≤ 2`, shifted Halton QMC otherwise.
    pub fn for_dim(d: usize, order: usize) -> Self {
        if d <= MAX_TENSOR_DIM {
            Self::gauss_hermite(d, order)
        } else {
            Self::halton(d, QMC_POINTS, QMC_SHIFT_SEED)
        }
    }

    /// Tensor-product Gauss–Hermite rule of `order` points per axis.
    pub fn gauss_hermite(d: usize, order: usize) -> Self {
        let (x, w) = hermite_nodes(order);
        let scale = std::f64::consts::PI.powf(-0.5);
        let total = order.pow(d as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut idx = flat;
            let mut p = Vector::zeros(d);
            let mut wt = 1.0;
            for k in 0..d {
                let j = idx % order;
                idx /= order;
                p[k] = std::f64::consts::SQRT_2 * x[j];
                wt *= w[j] * scale;
            }
            points.push(p);
            weights.push(wt);
        }
        Self { points, weights }
    }

    /// `count` Halton points with a random shift drawn from `seed`, mapped to
    /// normal samples; equal weights.
    pub fn halton(d: usize, count: usize, seed: u64) -> Self {
        let primes = first_primes(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let normal = Normal::standard();
        let points = (1..=count)
            .map(|i| {
                Vector::from_fn(d, |k, _| {
                    let u = (radical_inverse(i as u64, primes[k]) + shift[k]).fract();
                    let u = u.clamp(1e-16, 1.0 - 1e-16);
                    normal.inverse_cdf(u)
                })
            })
            .collect();
        Self {
            points,
            weights: vec![1.0 / count as f64; count],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(mean + S·Y)]` for `Y ~ N(0, I)`, i.e. the expectation under
    /// `N(mean, S Sᵀ)`.
    pub fn expect(&self, mean: &Vector, s: &Matrix, f: impl Fn(&Vector) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| w * f(&(mean + s * y)))
            .sum()
    }
}

/// Physicists' Gauss–Hermite nodes and weights (weight `e^{−x²}`).
pub fn hermite_nodes(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Hermite order must be positive");
    let mut jacobi = Matrix::zeros(order, order);
    for k in 1..order {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize to remove eigensolver round-off.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if order % 2 == 1 {
        pairs[order / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}
