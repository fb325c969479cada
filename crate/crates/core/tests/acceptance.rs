//! Acceptance suite: ten numerical checks against closed forms, independent
//! oracles and asymptotic laws. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transpath::functionals::{
    closed_form_a, ginzburg_landau, kl_objective, optimal_penalty_value, penalty_integrand, quasipotential,
    simplified_f, QuasipotentialCache,
};
use transpath::gaussian_bridge::{sample_bridge_range, GaussianPathMeasure};
use transpath::greens::{assemble_operator, fundamental_matrix, green_diagonal};
use transpath::grid::{FieldGrid, PathGrid};
use transpath::linalg::{sym_abs, Matrix, Vector};
use transpath::optimize::{alternate_minimize, gamma_sweep, grad_m_fbar, OptimizerConfig};
use transpath::potential::builtin_potential;

struct Outcome {
    pass: bool,
    detail: String,
}

fn list(v: &[f64], digits: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.digits$e}")).collect();
    format!("[{}]", items.join(", "))
}

fn s(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn model(name: &str) -> transpath::PotentialModel {
    builtin_potential(name, &BTreeMap::new()).unwrap()
}

/// Green's function of `−∂² + k²` on `[0, 1]` with Dirichlet ends, on the diagonal.
fn sinh_green(k: f64, t: f64) -> f64 {
    (-(-2.0 * k * t).exp_m1()) * (-(-2.0 * k * (1.0 - t)).exp_m1()) / (2.0 * k * (-(-2.0 * k).exp_m1()))
}

fn green_error(a: f64, eps: f64, n: usize) -> f64 {
    let field = FieldGrid::constant(&Matrix::from_element(1, 1, a), n, 1e-3).unwrap();
    let g = green_diagonal(&assemble_operator(&field, eps).unwrap()).unwrap();
    (1..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let exact = sinh_green(a / eps, t);
            (g.at_node(i)[(0, 0)] - exact).abs() / exact
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut min_order = f64::INFINITY;
    let mut max_order = 0.0f64;
    for a in [1.0, 2.0] {
        for eps in [0.2, 0.1, 0.05] {
            let e2000 = green_error(a, eps, 2000);
            let e1000 = green_error(a, eps, 1000);
            worst = worst.max(e2000);
            let order = (e1000 / e2000).log2();
            min_order = min_order.min(order);
            max_order = max_order.max(order);
        }
    }
    Outcome {
        pass: worst <= 1e-3 && min_order > 1.8 && max_order < 2.2,
        detail: format!("max rel error {worst:.3e} at n=2000; observed order in [{min_order:.3}, {max_order:.3}]"),
    }
}

fn criterion_2() -> Outcome {
    let mut values = Vec::new();
    for eps in [0.1, 0.05, 0.025, 0.0125] {
        let n = (40.0 / eps) as usize;
        let field = FieldGrid::from_fn(n, 1e-3, |t| Matrix::identity(2, 2) * (1.0 + t)).unwrap();
        let g = green_diagonal(&assemble_operator(&field, eps).unwrap()).unwrap();
        let worst = (1..n)
            .filter(|&i| {
                let t = i as f64 / n as f64;
                t >= 5.0 * eps && t <= 1.0 - 5.0 * eps
            })
            .map(|i| {
                let t = i as f64 / n as f64;
                let leading = Matrix::identity(2, 2) * (0.5 * eps / (1.0 + t));
                (g.at_node(i) - leading).norm() / eps
            })
            .fold(0.0, f64::max);
        values.push(worst);
    }
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let last = *values.last().unwrap();
    Outcome {
        pass: monotone && last <= 0.05,
        detail: format!("scaled deviations {}; final {last:.4e}", list(&values, 4)),
    }
}

fn criterion_3() -> Outcome {
    let eps = 0.5;
    let n = 1000;
    let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
    let field = FieldGrid::constant(&a, n, 1e-3).unwrap();
    let fm = fundamental_matrix(&field, eps).unwrap();
    let det = fm.mbar()[0].determinant();
    let det_err = (det - (-6.0f64).exp()).abs() / (-6.0f64).exp();

    // a field whose values do not commute across time
    let varying = FieldGrid::from_fn(200, 1e-3, |t| {
        Matrix::from_row_slice(2, 2, &[1.0 + t, 0.3 * (3.0 * t).sin(), 0.3 * (3.0 * t).sin(), 2.0 - t])
    })
    .unwrap();
    let fv = fundamental_matrix(&varying, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut semigroup = 0.0f64;
    let mut inverse = 0.0f64;
    for _ in 0..20 {
        let mut idx = [rng.random_range(0..=200usize), rng.random_range(0..=200), rng.random_range(0..=200)];
        idx.sort_unstable();
        let [i, k, j] = idx;
        let lhs = fv.propagator(j, k) * fv.propagator(k, i);
        semigroup = semigroup.max((lhs - fv.propagator(j, i)).norm());
        let back = fv.propagator(i, j) * fv.propagator(j, i);
        inverse = inverse.max((back - Matrix::identity(2, 2)).norm());
    }
    // constant field: propagator equals exp(−(t_j − t_i)A/ε)
    let mut exact_err = 0.0f64;
    for _ in 0..20 {
        let i = rng.random_range(0..=n);
        let j = rng.random_range(0..=n);
        let dt = (j as f64 - i as f64) / n as f64;
        let exact = Matrix::from_diagonal(&Vector::from_vec(vec![(-dt / eps).exp(), (-2.0 * dt / eps).exp()]));
        exact_err = exact_err.max((fm.propagator(j, i) - &exact).norm() / exact.norm());
    }
    Outcome {
        pass: det_err <= 1e-6 && semigroup <= 1e-8 && inverse <= 1e-8 && exact_err <= 1e-8,
        detail: format!(
            "det rel error {det_err:.2e}; semigroup {semigroup:.2e}; inverse {inverse:.2e}; constant-field propagator {exact_err:.2e}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let eps = 0.1;
    let n = 200;
    let mid = n / 2;
    let total = 200_000usize;
    let chunk = 20_000usize;
    let gm = GaussianPathMeasure::new(
        PathGrid::linear(&s(0.0), &s(0.0), n).unwrap(),
        FieldGrid::constant(&Matrix::identity(1, 1), n, 1e-3).unwrap(),
        eps,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probes: Vec<(usize, usize)> = (0..20)
        .map(|_| (rng.random_range(1..n), rng.random_range(1..n)))
        .collect();
    // running sums of z_i z_j and (z_i z_j)² per probe
    let mut mid_sq = 0.0;
    let mut cross = vec![0.0; probes.len()];
    let mut cross_sq = vec![0.0; probes.len()];
    let mut identical = true;
    let seed = 2024;
    let mut begin = 0;
    while begin < total {
        let batch = sample_bridge_range(&gm, begin as u64, chunk, seed).unwrap();
        if begin == 0 {
            let again = sample_bridge_range(&gm, 0, chunk, seed).unwrap();
            identical = (0..chunk).all(|k| {
                batch.sample(k).iter().zip(again.sample(k)).all(|(x, y)| x.to_bits() == y.to_bits())
            });
        }
        for k in 0..chunk {
            let z_mid = batch.value(k, mid, 0);
            mid_sq += z_mid * z_mid;
            for (p, &(i, j)) in probes.iter().enumerate() {
                let v = batch.value(k, i, 0) * batch.value(k, j, 0);
                cross[p] += v;
                cross_sq[p] += v * v;
            }
        }
        begin += chunk;
    }
    let nn = total as f64;
    let var_mid = mid_sq / nn;
    let target = 2.0 * sinh_green(1.0 / eps, 0.5);
    let var_err = (var_mid - target).abs() / target;
    // independent discrete oracle: dense inverse of tridiag(−n², 2n² + ε⁻², −n²)
    let nf = n as f64;
    let dense = Matrix::from_fn(n - 1, n - 1, |r, c| {
        if r == c {
            2.0 * nf * nf + 1.0 / (eps * eps)
        } else if r.abs_diff(c) == 1 {
            -nf * nf
        } else {
            0.0
        }
    });
    let cov = dense.try_inverse().unwrap() * (2.0 * nf);
    let mut worst_z = 0.0f64;
    for (p, &(i, j)) in probes.iter().enumerate() {
        let exact = cov[(i - 1, j - 1)];
        let mean = cross[p] / nn;
        let var = cross_sq[p] / nn - mean * mean;
        let se = (var / nn).sqrt();
        worst_z = worst_z.max((mean - exact).abs() / se);
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        pass: var_err <= 0.02 && worst_z <= 4.0 && identical && elapsed <= 60.0,
        detail: format!(
            "Var z(0.5) = {var_mid:.5} vs 2G = {target:.5} (rel {var_err:.2e}); worst covariance probe {worst_z:.2} SE; bit-identical {identical}; {elapsed:.1} s"
        ),
    }
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + Matrix::identity(d, d) * 0.1
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut identity_err = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(1..=4);
        let a = random_spd(&mut rng, d);
        let h = random_symmetric(&mut rng, d);
        let ainv = a.clone().try_inverse().unwrap();
        let lhs = -2.0 * h.trace() + (&h * &h * &ainv).trace() + a.trace();
        let rhs = penalty_integrand(&h, &a).unwrap();
        identity_err = identity_err.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    let mut value_err = 0.0f64;
    let mut violations = 0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=4);
        let b = random_symmetric(&mut rng, d);
        let eig = SymmetricEigen::new(b.clone());
        if eig.eigenvalues.iter().any(|l| l.abs() < 1e-3) {
            continue;
        }
        let abs_b = sym_abs(&b);
        let at_opt = penalty_integrand(&b, &abs_b).unwrap();
        let closed: f64 = eig.eigenvalues.iter().map(|l| 2.0 * (l.abs() - l)).sum();
        value_err = value_err.max((at_opt - closed).abs().max((optimal_penalty_value(&b) - closed).abs()));
        let e = random_symmetric(&mut rng, d) * 0.05;
        let trial = &abs_b + e;
        if SymmetricEigen::new(trial.clone()).eigenvalues.min() > 0.0
            && penalty_integrand(&b, &trial).unwrap() < at_opt - 1e-12
        {
            violations += 1;
        }
    }
    Outcome {
        pass: identity_err <= 1e-10 && value_err <= 1e-12 && violations == 0,
        detail: format!(
            "identity rel error {identity_err:.2e}; optimal value error {value_err:.2e}; optimality violations {violations}"
        ),
    }
}

fn fd_relative_error(p: &transpath::PotentialModel, m: &PathGrid, a: &FieldGrid, eps: f64) -> f64 {
    let g = grad_m_fbar(p, m, a, eps).unwrap();
    let n = m.n();
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..n {
        let h = 1e-6;
        let mut mp = m.clone();
        let mut mm = m.clone();
        mp.set_interior(i, &m.values()[i] + s(h)).unwrap();
        mm.set_interior(i, &m.values()[i] - s(h)).unwrap();
        let fd = (transpath::functionals::fbar(p, &mp, a, eps).unwrap()
            - transpath::functionals::fbar(p, &mm, a, eps).unwrap())
            / (2.0 * h);
        diff = diff.max((fd - g[i - 1][0]).abs());
        scale = scale.max(fd.abs());
    }
    diff / scale
}

fn criterion_6() -> Outcome {
    let p = model("quadratic");
    let eps = 0.2;
    let n = 400;
    let res = alternate_minimize(&p, &PathGrid::linear(&s(0.0), &s(1.0), n).unwrap(), eps, &OptimizerConfig::default())
        .unwrap();
    let a_err = res.a.values().iter().map(|a| (a[(0, 0)] - 1.0).abs()).fold(0.0, f64::max);
    let m_err = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (res.m.values()[i][0] - (t / eps).sinh() / (1.0 / eps).sinh()).abs()
        })
        .fold(0.0, f64::max);
    let penalty = res.trace.records.last().unwrap().penalty;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dw = model("double_well_1d");
    let mut fd_err = 0.0f64;
    for k in 0..20 {
        let p_k = if k % 2 == 0 { &dw } else { &p };
        let nk = 40;
        let coeffs: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
        let m = PathGrid::from_fn(&s(0.0), &s(1.0), nk, |t| {
            s(t + coeffs.iter().enumerate().map(|(j, c)| c * ((j + 1) as f64 * std::f64::consts::PI * t).sin()).sum::<f64>())
        })
        .unwrap();
        let (c0, c1) = (rng.random_range(0.2..2.0), rng.random_range(-0.15..0.15));
        let a = FieldGrid::from_fn(nk, 1e-3, |t| Matrix::from_element(1, 1, c0 + c1 * (5.0 * t).cos())).unwrap();
        fd_err = fd_err.max(fd_relative_error(p_k, &m, &a, rng.random_range(0.05..0.5)));
    }
    Outcome {
        pass: res.trace.converged && a_err <= 1e-8 && m_err <= 2e-3 && penalty < 1e-8 && fd_err < 1e-6,
        detail: format!(
            "|A − 1| {a_err:.2e}; sinh error {m_err:.2e}; penalty {penalty:.2e}; gradient vs FD {fd_err:.2e}; {} outer iterations",
            res.trace.records.len()
        ),
    }
}

fn criterion_7() -> Outcome {
    let p = model("quadratic");
    let eps_list = [0.1, 0.05, 0.025];
    let n = 2000;
    let errs: Vec<f64> = eps_list
        .iter()
        .map(|&eps| {
            let gm = GaussianPathMeasure::new(
                PathGrid::linear(&s(0.0), &s(0.0), n).unwrap(),
                FieldGrid::constant(&Matrix::identity(1, 1), n, 1e-3).unwrap(),
                eps,
            )
            .unwrap();
            let k = kl_objective(&gm, &p, 0.25, 20).unwrap();
            (k.quad_expect + k.trace_term + k.logdet_term - 0.25).abs()
        })
        .collect();
    let slopes: Vec<f64> = (0..2)
        .map(|j| (errs[j] / errs[j + 1]).ln() / (eps_list[j] / eps_list[j + 1]).ln())
        .collect();
    Outcome {
        pass: slopes.iter().all(|&sl| sl >= 0.6),
        detail: format!("errors {}; log-log slopes {}", list(&errs, 4), list(&slopes, 3)),
    }
}

fn criterion_8() -> Outcome {
    let p = model("double_well_1d");
    let n = 1000;
    // stays inside the left well, where D²V is bounded away from zero
    let m = PathGrid::from_fn(&s(0.0), &s(0.0), n, |t| s(0.05 * (std::f64::consts::PI * t).sin())).unwrap();
    let a = closed_form_a(&p, &m, 1e-3).unwrap();
    let gap = |eps: f64| {
        let gm = GaussianPathMeasure::new(m.clone(), a.clone(), eps).unwrap();
        (kl_objective(&gm, &p, 0.25, 20).unwrap().total - simplified_f(&p, &m, &a, eps, 0.25).unwrap()).abs()
    };
    let k = gap(0.1) / 0.1f64.sqrt();
    let checks: Vec<(f64, f64, f64)> = [0.05, 0.025].iter().map(|&e| (e, gap(e), k * e.sqrt())).collect();
    Outcome {
        pass: checks.iter().all(|(_, g, b)| g <= b),
        detail: format!(
            "K = {k:.4}; {}",
            checks
                .iter()
                .map(|(e, g, b)| format!("eps {e}: gap {g:.4e} <= {b:.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let p = model("double_well_1d");
    let cache = QuasipotentialCache::default();
    let m0 = PathGrid::linear(&s(0.0), &s(1.0), 400).unwrap();
    let eps_list = [0.2, 0.1, 0.05, 0.025];
    let report = gamma_sweep(&p, &m0, &eps_list, &OptimizerConfig::default(), &cache).unwrap();
    let phi = report.quasipotential.expect("both endpoints are minima");
    let rows = &report.rows;
    let resolved = rows.iter().all(|r| r.n as f64 >= 20.0 / r.eps);
    let energies: Vec<f64> = rows.iter().map(|r| r.e_eps).collect();
    let towards = energies.windows(2).all(|w| (w[1] - phi).abs() < (w[0] - phi).abs());
    let last = rows.last().unwrap();
    let rel = (last.e_eps - phi).abs() / phi;
    let penalties: Vec<f64> = rows.iter().map(|r| r.penalty).collect();
    let penalty_down = penalties.windows(2).all(|w| w[1] < w[0]);
    // nodes with |m − ½| < 0.1, measured directly on the returned paths
    let occupancy: Vec<f64> = report
        .solutions
        .iter()
        .map(|(m, _)| {
            m.values().iter().filter(|x| (x[0] - 0.5).abs() < 0.1).count() as f64 / (m.n() + 1) as f64
        })
        .collect();
    let occupancy_down = occupancy.windows(2).all(|w| w[1] < w[0]);
    let converged = rows.iter().all(|r| r.converged);
    let recomputed = report
        .solutions
        .iter()
        .zip(rows)
        .all(|((m, _), r)| (ginzburg_landau(&p, m, r.eps).unwrap() - r.e_eps).abs() < 1e-14);
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        pass: resolved
            && converged
            && recomputed
            && towards
            && rel <= 0.05
            && penalty_down
            && occupancy_down
            && elapsed <= 600.0,
        detail: format!(
            "Phi(0,1) = {phi:.6}; E_eps(m*) {} (rel gap at eps=0.025: {rel:.3}, needs <= 0.05); \
             penalty {} decreasing {penalty_down}; saddle occupancy {} decreasing {occupancy_down}; \
             converged {converged}; {elapsed:.1} s",
            list(&energies, 6),
            list(&penalties, 4),
            list(&occupancy, 4)
        ),
    }
}

fn criterion_10() -> Outcome {
    let p = model("double_well_1d");
    let half = quasipotential(&p, &s(0.0), &s(0.5), 20.0, 2000).unwrap();
    let rel = (half.value - 1.0 / 128.0).abs() * 128.0;
    let same: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&x| quasipotential(&p, &s(x), &s(x), 20.0, 2000).unwrap().value)
        .collect();
    Outcome {
        pass: rel <= 0.02 && same.iter().all(|&v| v == 0.0),
        detail: format!("Phi(0, 1/2) = {:.8} (rel error {rel:.2e}); Phi(x, x) = {same:?}", half.value),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Green's function vs sinh oracle", criterion_1),
        ("Green's function asymptotic law", criterion_2),
        ("fundamental matrix determinant and propagators", criterion_3),
        ("bridge sampler moments and determinism", criterion_4),
        ("algebraic identity and optimal field", criterion_5),
        ("exactly solvable optimization", criterion_6),
        ("field-part asymptotics", criterion_7),
        ("KL vs simplified functional", criterion_8),
        ("eps sweep toward the quasipotential", criterion_9),
        ("quasipotential oracle", criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {tag}: {name} | {} | {:.1} s",
            k + 1,
            out.detail,
            t.elapsed().as_secs_f64()
        );
        if !out.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria PASS");
    } else {
        println!("acceptance: FAIL on criteria {failed:?}");
        std::process::exit(1);
    }
}
