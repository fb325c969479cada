use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use transpath::grid::fmt_num;
use transpath::linalg::Vector;
use transpath::{builtin_potential, gamma_sweep, OptimizerConfig, PathGrid, QuasipotentialCache};
use transpath_cli::RunConfig;

const DW: &str = r#"
seed = 7

[potential]
name = "double_well_1d"

[path]
x_minus = [0.0]
x_plus = [1.0]
n = 100

[numerics]
eps = 0.2
eps_list = [0.2, 0.1, 0.05]

[sample_bridge]
count = 4
"#;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_transpath")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(bin())
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    status.status.code().unwrap()
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn minimize_writes_all_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", DW);
    let out = tmp.path().join("out");
    assert_eq!(run("minimize", &cfg, &out, &[]), 0);
    for f in ["path.csv", "field.csv", "trace.jsonl", "summary.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let s = summary(&out);
    assert_eq!(s["flags"]["converged"], true);
    assert_eq!(s["files"].as_array().unwrap().len(), 4);
    let path = fs::read_to_string(out.join("path.csv")).unwrap();
    assert_eq!(path.lines().next().unwrap(), "t,m1");
    assert_eq!(path.lines().count(), 102);
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count() as u64, s["breakdown"]["outer_iterations"].as_u64().unwrap());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", DW);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("minimize", &cfg, &a, &["--threads", "1"]), 0);
    assert_eq!(run("minimize", &cfg, &b, &["--threads", "4"]), 0);
    for f in ["path.csv", "field.csv", "trace.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(summary(&a)["config_sha256"], summary(&b)["config_sha256"]);
}

#[test]
fn config_echo_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", DW);
    let out = tmp.path().join("out");
    assert_eq!(run("kl-eval", &cfg, &out, &["--seed", "11"]), 0);
    let echo = summary(&out)["config"].as_str().unwrap().to_string();
    let reparsed = RunConfig::from_toml(&echo).unwrap();
    let mut expected = RunConfig::from_toml(DW).unwrap();
    expected.seed = 11;
    expected.output_dir = Some(out.clone());
    assert_eq!(reparsed, expected);
    assert_eq!(reparsed.to_toml().unwrap(), echo);
}

#[test]
fn sweep_table_matches_library_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", DW);
    let out = tmp.path().join("out");
    assert_eq!(run("gamma-sweep", &cfg, &out, &[]), 0);
    let table = fs::read_to_string(out.join("sweep_table.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();

    let p = builtin_potential("double_well_1d", &BTreeMap::new()).unwrap();
    let m0 = PathGrid::linear(&Vector::from_element(1, 0.0), &Vector::from_element(1, 1.0), 100).unwrap();
    let cache = QuasipotentialCache::new(20.0, 2000);
    let report = gamma_sweep(&p, &m0, &[0.2, 0.1, 0.05], &OptimizerConfig::default(), &cache).unwrap();
    for (row, want) in rows.iter().zip(&report.rows) {
        assert_eq!(row[col("eps")], fmt_num(want.eps));
        assert_eq!(row[col("e_eps")], fmt_num(want.e_eps));
        assert_eq!(row[col("penalty")], fmt_num(want.penalty));
        assert_eq!(row[col("fbar")], fmt_num(want.fbar));
        assert_eq!(row[col("saddle_fraction")], fmt_num(want.saddle_fraction));
    }
    for k in 0..3 {
        assert!(out.join(format!("eps{k}_path.csv")).is_file());
    }
}

#[test]
fn unknown_key_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let text = DW.replace("n = 100", "n = 100\nresolution = 3");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(run("minimize", &cfg, &out, &[]), 2);
    assert!(!out.exists());

    let text = DW.replace("[sample_bridge]", "[sample_bridge]\nrepeats = 2");
    let cfg = write_config(tmp.path(), "bad2.toml", &text);
    assert_eq!(run("sample-bridge", &cfg, &out, &[]), 2);
}

#[test]
fn non_critical_endpoints_rejected_for_minimize() {
    let tmp = TempDir::new().unwrap();
    let text = DW.replace("x_plus = [1.0]", "x_plus = [0.8]");
    let cfg = write_config(tmp.path(), "dw.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(run("minimize", &cfg, &out, &[]), 2);
    assert_eq!(run("gamma-sweep", &cfg, &out, &[]), 2);
    assert_eq!(run("kl-eval", &cfg, &out, &[]), 0);
}

#[test]
fn non_convergence_exits_with_numerical_code() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{DW}\n[optimizer]\nmax_outer = 1\n");
    let cfg = write_config(tmp.path(), "dw.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(run("minimize", &cfg, &out, &[]), 3);
    let s = summary(&out);
    assert_eq!(s["flags"]["converged"], false);
    assert!(out.join("path.csv").is_file());
}

#[test]
fn writes_stay_inside_output_dir() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "dw.toml", DW);
    for cmd in ["kl-eval", "sample-bridge", "green-diag"] {
        let status = Command::new(bin())
            .current_dir(tmp.path())
            .args([cmd, "--config", "dw.toml", "--out", "results"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut entries: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    assert_eq!(entries, ["dw.toml", "results"]);
    let listed = summary(&tmp.path().join("results"))["files"].clone();
    for f in listed.as_array().unwrap() {
        assert!(tmp.path().join("results").join(f.as_str().unwrap()).is_file());
    }
}

#[test]
fn sample_bridge_layout_and_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "dw.toml", DW);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(run("sample-bridge", &cfg, &a, &[]), 0);
    assert_eq!(run("sample-bridge", &cfg, &b, &["--seed", "7"]), 0);
    assert_eq!(run("sample-bridge", &cfg, &c, &["--seed", "8"]), 0);
    let sa = fs::read_to_string(a.join("samples.csv")).unwrap();
    assert_eq!(sa.lines().next().unwrap(), "sample_id,t,z1");
    assert_eq!(sa.lines().count(), 1 + 4 * 101);
    let first = sa.lines().nth(1).unwrap();
    assert!(first.starts_with("0,0.0000000000000000e0,"));
    assert_eq!(sa, fs::read_to_string(b.join("samples.csv")).unwrap());
    assert_ne!(sa, fs::read_to_string(c.join("samples.csv")).unwrap());
}

#[test]
fn kl_eval_reports_breakdown_and_inputs() {
    let tmp = TempDir::new().unwrap();
    let text = DW.replace(
        "[sample_bridge]",
        "[field]\nkind = \"constant\"\nmatrix = [[0.5]]\n\n[sample_bridge]",
    );
    let cfg = write_config(tmp.path(), "dw.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(run("kl-eval", &cfg, &out, &[]), 0);
    let kl: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("kl.json")).unwrap()).unwrap();
    let b = &kl["breakdown"];
    let parts = ["expectation_psi", "kinetic", "quad_expect", "trace_term", "logdet_term", "regularizer"];
    let sum: f64 = parts.iter().map(|k| b[*k].as_f64().unwrap()).sum();
    assert!((sum - b["total"].as_f64().unwrap()).abs() < 1e-10 * sum.abs().max(1.0));
    assert_eq!(kl["inputs"]["eps"], 0.2);
    assert_eq!(kl["inputs"]["field"]["kind"], "constant");
    let field = fs::read_to_string(out.join("field.csv")).unwrap();
    assert!(field.lines().skip(1).all(|l| l.ends_with(",5.0000000000000000e-1")));
}

#[test]
fn quasipotential_to_the_barrier() {
    let tmp = TempDir::new().unwrap();
    let text = DW.replace("x_plus = [1.0]", "x_plus = [0.5]");
    let cfg = write_config(tmp.path(), "dw.toml", &text);
    let out = tmp.path().join("out");
    assert_eq!(run("quasipotential", &cfg, &out, &[]), 0);
    let q: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("quasipotential.json")).unwrap()).unwrap();
    let v = q["value"].as_f64().unwrap();
    assert!((v - 1.0 / 128.0).abs() < 1e-4, "value {v}");
    assert_eq!(q["reference"].as_f64().unwrap(), 1.0 / 128.0);
}
