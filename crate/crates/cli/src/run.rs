//! Subcommand dispatch, output files and the run summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use transpath::functionals::{self, kl_objective};
use transpath::grid::{fmt_num, write_grid_csv};
use transpath::optimize::{saddle_fraction, OptimizationTrace};
use transpath::{
    alternate_minimize, gamma_sweep, sample_bridge, FieldGrid, GaussianPathMeasure, PathGrid,
    QuasipotentialCache, VERSION,
};

use crate::config::{Command, Resolved, RunConfig};
use crate::error::{CliError, EXIT_NUMERICAL, EXIT_OK};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunFlags {
    pub converged: bool,
    pub line_search_failed: bool,
    pub numerical_failure: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub library_version: String,
    /// Effective config (after command-line overrides) as TOML.
    pub config: String,
    /// SHA-256 of the effective config without `output_dir`, so that
    /// identical inputs hash identically wherever they are written.
    pub config_sha256: String,
    pub wall_time_s: f64,
    pub breakdown: Value,
    pub files: Vec<String>,
    pub flags: RunFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Collects output files; every file lands directly inside `dir`.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        debug_assert!(!name.contains(['/', '\\']) && name != "..");
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).expect("serializable");
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

struct Outcome {
    breakdown: Value,
    flags: RunFlags,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Loads the config, applies overrides and resolves the output directory.
pub fn effective_config(opts: &RunOptions) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&opts.config_path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.output_dir = Some(dir);
    Ok(cfg)
}

/// Runs one subcommand end to end and returns the process exit code.
pub fn execute(cmd: Command, opts: &RunOptions) -> i32 {
    let start = Instant::now();
    let cfg = match effective_config(opts) {
        Ok(c) => c,
        Err(e) => return report(e),
    };
    let resolved = match cfg.validate(cmd) {
        Ok(r) => r,
        Err(e) => return report(e),
    };
    let inputs = RunConfig {
        output_dir: None,
        ..cfg.clone()
    };
    let (echo, hashed) = match (cfg.to_toml(), inputs.to_toml()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return report(e),
    };
    let dir = cfg.output_dir.clone().expect("resolved output dir");
    let mut out = match Outputs::create(&dir) {
        Ok(o) => o,
        Err(e) => return report(e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(opts.threads).build() {
        Ok(p) => p,
        Err(e) => return report(CliError::Invalid(format!("thread pool: {e}"))),
    };
    let result = pool.install(|| dispatch(cmd, &cfg, &resolved, &mut out));
    let (outcome, error, code) = match result {
        Ok(o) => {
            let code = if o.flags.converged { EXIT_OK } else { EXIT_NUMERICAL };
            (o, None, code)
        }
        Err(e) => {
            let code = e.exit_code();
            let flags = RunFlags {
                numerical_failure: code == EXIT_NUMERICAL,
                ..Default::default()
            };
            eprintln!("error: {e}");
            (
                Outcome {
                    breakdown: Value::Null,
                    flags,
                },
                Some(e.to_string()),
                code,
            )
        }
    };
    let mut files = out.files.clone();
    files.push("summary.json".into());
    let summary = RunSummary {
        command: cmd.name().into(),
        library_version: VERSION.into(),
        config_sha256: sha256_hex(hashed.as_bytes()),
        config: echo,
        wall_time_s: start.elapsed().as_secs_f64(),
        breakdown: outcome.breakdown,
        files,
        flags: outcome.flags,
        error,
    };
    if let Err(e) = out.write_json("summary.json", &summary) {
        return report(e);
    }
    if code == EXIT_NUMERICAL && summary.error.is_none() {
        eprintln!("warning: optimization did not converge; see summary.json");
    }
    code
}

fn report(e: CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn dispatch(cmd: Command, cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    match cmd {
        Command::Minimize => minimize(cfg, r, out),
        Command::KlEval => kl_eval(cfg, r, out),
        Command::SampleBridge => bridge_samples(cfg, r, out),
        Command::GreenDiag => green_diag(cfg, r, out),
        Command::GammaSweep => sweep(cfg, r, out),
        Command::Quasipotential => quasipotential(cfg, r, out),
    }
}

fn converged_flags(trace: &OptimizationTrace) -> RunFlags {
    RunFlags {
        converged: trace.converged,
        line_search_failed: trace.records.iter().any(|rec| rec.line_search_failed),
        numerical_failure: false,
    }
}

fn minimize(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let eps = cfg.eps();
    let m0 = cfg.initial_path(r)?;
    let res = alternate_minimize(&r.potential, &m0, eps, &cfg.optimizer)?;
    out.write("path.csv", &path_csv(&res.m))?;
    out.write("field.csv", &field_csv(&res.a))?;
    out.write("trace.jsonl", &trace_jsonl(&res.trace, None))?;
    if let Some(kl) = &res.kl {
        out.write_json("kl.json", kl)?;
    }
    let last = res.trace.records.last();
    let breakdown = json!({
        "eps": eps,
        "n": res.m.n(),
        "fbar": last.map(|rec| rec.fbar),
        "e_eps": last.map(|rec| rec.e_eps),
        "penalty": last.map(|rec| rec.penalty),
        "regularizer": functionals::regularizer(&res.a, eps, cfg.optimizer.gamma),
        "saddle_fraction": saddle_fraction(&r.potential, &res.m),
        "outer_iterations": res.trace.records.len(),
        "kl": res.kl,
    });
    Ok(Outcome {
        breakdown,
        flags: converged_flags(&res.trace),
    })
}

fn measure(cfg: &RunConfig, r: &Resolved) -> Result<GaussianPathMeasure, CliError> {
    let m = cfg.initial_path(r)?;
    let a = cfg.field_for(r, &m)?;
    Ok(GaussianPathMeasure::new(m, a, cfg.eps())?)
}

fn write_measure(gm: &GaussianPathMeasure, out: &mut Outputs) -> Result<(), CliError> {
    out.write("path.csv", &path_csv(gm.mean()))?;
    out.write("field.csv", &field_csv(gm.field()))
}

fn inputs_echo(cfg: &RunConfig) -> Value {
    json!({
        "potential": cfg.potential.name,
        "params": cfg.potential.params,
        "x_minus": cfg.path.x_minus,
        "x_plus": cfg.path.x_plus,
        "n": cfg.path.n,
        "shape": cfg.path.shape,
        "amplitude": cfg.path.amplitude,
        "eps": cfg.numerics.eps,
        "gamma": cfg.optimizer.gamma,
        "quad_order": cfg.optimizer.quad_order,
        "floor_a": cfg.optimizer.floor_a,
        "field": cfg.field,
    })
}

fn kl_eval(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let gm = measure(cfg, r)?;
    let kl = kl_objective(&gm, &r.potential, cfg.optimizer.gamma, cfg.optimizer.quad_order)?;
    let doc = json!({ "inputs": inputs_echo(cfg), "breakdown": kl });
    out.write_json("kl.json", &doc)?;
    write_measure(&gm, out)?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(Outcome {
        breakdown: serde_json::to_value(kl).expect("serializable"),
        flags: RunFlags {
            converged: true,
            ..Default::default()
        },
    })
}

fn bridge_samples(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let gm = measure(cfg, r)?;
    let count = cfg.sample_bridge.count;
    let batch = sample_bridge(&gm, count, cfg.seed)?;
    let (n, d) = (gm.n(), gm.dim());
    let mut s = String::from("sample_id,t");
    for c in 1..=d {
        s.push_str(&format!(",z{c}"));
    }
    s.push('\n');
    for k in 0..count {
        for i in 0..=n {
            s.push_str(&format!("{k},{}", fmt_num(gm.mean().t(i))));
            for c in 0..d {
                s.push(',');
                s.push_str(&fmt_num(batch.value(k, i, c)));
            }
            s.push('\n');
        }
    }
    out.write("samples.csv", s.as_bytes())?;
    write_measure(&gm, out)?;
    Ok(Outcome {
        breakdown: json!({ "count": count, "seed": cfg.seed, "n": n, "dim": d }),
        flags: RunFlags {
            converged: true,
            ..Default::default()
        },
    })
}

fn green_diag(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let gm = measure(cfg, r)?;
    let blocks = gm.green().with_boundary();
    let d = gm.dim();
    let mut s = String::from("t");
    push_upper_header(&mut s, "G", d);
    s.push('\n');
    for (i, g) in blocks.iter().enumerate() {
        s.push_str(&fmt_num(gm.mean().t(i)));
        push_upper_row(&mut s, g);
        s.push('\n');
    }
    out.write("green_diag.csv", s.as_bytes())?;
    write_measure(&gm, out)?;
    let max_trace = blocks.iter().map(|g| g.trace()).fold(0.0, f64::max);
    Ok(Outcome {
        breakdown: json!({
            "eps": cfg.eps(),
            "n": gm.n(),
            "max_trace": max_trace,
            "green_bound_ratio": gm.green_bound_ratio(),
        }),
        flags: RunFlags {
            converged: true,
            ..Default::default()
        },
    })
}

fn sweep(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let eps_list = cfg.numerics.eps_list.clone().expect("validated eps_list");
    let m0 = cfg.initial_path(r)?;
    let cache = QuasipotentialCache::new(cfg.quasipotential.horizon, cfg.quasipotential.n);
    let report = gamma_sweep(&r.potential, &m0, &eps_list, &cfg.optimizer, &cache)?;
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    let mut s = String::from(
        "eps,n,e_eps,penalty,fbar,regularizer,saddle_fraction,limit_jump_energy,limit_penalty,limit_total,phi,outer_iterations,converged\n",
    );
    for row in &report.rows {
        let cells = [
            fmt_num(row.eps),
            row.n.to_string(),
            fmt_num(row.e_eps),
            fmt_num(row.penalty),
            fmt_num(row.fbar),
            fmt_num(row.regularizer),
            fmt_num(row.saddle_fraction),
            opt(row.limit.map(|l| l.jump_energy)),
            opt(row.limit.map(|l| l.penalty)),
            opt(row.limit.map(|l| l.total)),
            opt(report.quasipotential),
            row.outer_iterations.to_string(),
            row.converged.to_string(),
        ];
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    out.write("sweep_table.csv", s.as_bytes())?;
    let mut traces = Vec::new();
    for (k, ((m, a), trace)) in report.solutions.iter().zip(&report.traces).enumerate() {
        out.write(&format!("eps{k}_path.csv"), &path_csv(m))?;
        out.write(&format!("eps{k}_field.csv"), &field_csv(a))?;
        traces.extend(trace_jsonl(trace, Some(eps_list[k])));
    }
    out.write("trace.jsonl", &traces)?;
    let flags = RunFlags {
        converged: report.traces.iter().all(|t| t.converged),
        line_search_failed: report
            .traces
            .iter()
            .any(|t| t.records.iter().any(|rec| rec.line_search_failed)),
        numerical_failure: false,
    };
    Ok(Outcome {
        breakdown: json!({ "rows": report.rows, "quasipotential": report.quasipotential }),
        flags,
    })
}

fn quasipotential(cfg: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<Outcome, CliError> {
    let q = &cfg.quasipotential;
    let res = functionals::quasipotential(&r.potential, &r.x_minus, &r.x_plus, q.horizon, q.n)?;
    let doc = json!({
        "value": res.value,
        "reference": res.reference,
        "converged": res.converged,
        "iterations": res.iterations,
        "horizon": q.horizon,
        "n": q.n,
    });
    out.write_json("quasipotential.json", &doc)?;
    out.write("path.csv", &path_csv(&res.path))?;
    Ok(Outcome {
        breakdown: doc,
        flags: RunFlags {
            converged: res.converged,
            ..Default::default()
        },
    })
}

fn path_csv(m: &PathGrid) -> Vec<u8> {
    let mut buf = Vec::new();
    write_grid_csv(&mut buf, m, None).expect("writing to memory");
    buf
}

/// One row per node: `t, A11, A12, .., Add` (upper triangle, row-major).
fn field_csv(a: &FieldGrid) -> Vec<u8> {
    let mut s = String::from("t");
    push_upper_header(&mut s, "A", a.dim());
    s.push('\n');
    for (i, ai) in a.values().iter().enumerate() {
        s.push_str(&fmt_num(a.t(i)));
        push_upper_row(&mut s, ai);
        s.push('\n');
    }
    s.into_bytes()
}

fn push_upper_header(s: &mut String, prefix: &str, d: usize) {
    for i in 1..=d {
        for j in i..=d {
            s.push_str(&format!(",{prefix}{i}{j}"));
        }
    }
}

fn push_upper_row(s: &mut String, m: &transpath::linalg::Matrix) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            s.push(',');
            s.push_str(&fmt_num(m[(i, j)]));
        }
    }
}

/// One JSON object per outer iteration, tagged with ε in sweeps.
fn trace_jsonl(trace: &OptimizationTrace, eps: Option<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    for rec in &trace.records {
        let mut v = serde_json::to_value(rec).expect("serializable");
        if let (Some(eps), Value::Object(map)) = (eps, &mut v) {
            map.insert("eps".into(), json!(eps));
        }
        serde_json::to_writer(&mut buf, &v).expect("writing to memory");
        buf.write_all(b"\n").expect("writing to memory");
    }
    buf
}
