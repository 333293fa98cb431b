use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ghdo_core::checkpoint::Checkpoint;
use ghdo_core::{AghdoNetwork, NetworkSpec};
use num_complex::Complex64;
use serde_json::Value;

fn ghdo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghdo"))
        .args(args)
        .env("RAYON_NUM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn write_config(dir: &Path, sites: usize, v: f64, g: f64, periodic: bool, extra: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
[model]
sites = {sites}
local_rank = 2
feature_densities = [2]
init_width = 0.1
seed = 3

[physics]
v = {v}
g = {g}
gamma = 1.0
periodic = {periodic}

[output]
dir = "{}"
checkpoint_interval = 50
estimate_samples = 2048
{extra}
"#,
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn oracle_single_qubit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1, 0.0, 1.0, false, "");
    let report = json(&ghdo(&["oracle", &cfg]));
    let point = &report["points"][0];
    assert!((point["mz"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-10);
    assert!(point["mx"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn oracle_is_deterministic_and_writes_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2, 2.0, 1.5, true, "");
    let matrix = dir.path().join("rho.json");
    let a = ghdo(&["oracle", &cfg, "--matrix-out", matrix.to_str().unwrap()]);
    let b = ghdo(&["oracle", &cfg]);
    assert_eq!(json(&a), json(&b));
    let m = ghdo_core::matrix_io::read_matrix(&matrix).unwrap();
    assert_eq!(m.dim(), (4, 4));
}

#[test]
fn oracle_dark_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3, 2.0, 0.0, true, "");
    let report = json(&ghdo(&["oracle", &cfg]));
    assert!((report["points"][0]["mz"].as_f64().unwrap() + 1.0).abs() < 1e-10);
}

#[test]
fn malformed_key_exits_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2, 2.0, 1.0, true, "");
    let out = ghdo(&["run", &cfg, "--set", "tdvp.time_step=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time_step"));

    let bad = write_config(dir.path(), 2, 2.0, 1.0, true, "colour = \"red\"");
    let out = ghdo(&["oracle", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn verify_suites() {
    let out = ghdo(&["verify", "schur"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("hadamard: 500/500"), "{text}");

    let out = ghdo(&["verify", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_decays_to_dark_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        4,
        2.0,
        0.0,
        true,
        "",
    );
    let summary = json(&ghdo(&[
        "run",
        &cfg,
        "--set",
        "tdvp.dt=0.05",
        "--set",
        "tdvp.max_steps=300",
        "--set",
        "tdvp.samples_per_step=512",
        "--set",
        "tdvp.regularization=1e-2",
    ]));
    let point = &summary["points"][0];
    let mz = point["exact"]["mz"].as_f64().unwrap();
    assert!((mz + 1.0).abs() <= 0.005, "mz = {mz}");

    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("step,time,l_loc_sq,mx,my,mz,purity"), "{header}");
    assert_eq!(csv.lines().count() - 1, point["steps"].as_u64().unwrap() as usize);
    let ck = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    assert_eq!(ck.version, "ghdo-ckpt-1");
}

fn save(net: &AghdoNetwork, path: &Path) {
    Checkpoint::from_network(net, 0, 0, 0.0).save(path).unwrap();
}

fn spec(sites: usize, rank: usize) -> NetworkSpec {
    NetworkSpec {
        sites,
        local_rank: rank,
        feature_densities: vec![1],
        init_width: 0.1,
        seed: 0,
    }
}

#[test]
fn estimate_from_exported_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let n = 3;

    // uniform classical state: φ[h, s, a] = δ(a, s)
    let uniform = AghdoNetwork::with_output_bias(spec(n, 2), |_, s, a| {
        Complex64::new(if a == s { 1.0 } else { 0.0 }, 0.0)
    })
    .unwrap();
    let path = dir.path().join("uniform.json");
    save(&uniform, &path);
    let report = json(&ghdo(&["estimate", path.to_str().unwrap(), "--samples", "4000"]));
    let s2 = &report["estimates"]["renyi2"];
    let (mean, err) = (s2["mean"].as_f64().unwrap(), s2["std_error"].as_f64().unwrap());
    assert!((mean - n as f64).abs() <= 3.0 * err + 1e-9, "S2 = {mean} ± {err}");

    // R = 1: a pure product state
    let pure = AghdoNetwork::with_output_bias(spec(n, 1), |_, s, _| Complex64::new(1.0 + s as f64, 0.5)).unwrap();
    let path = dir.path().join("pure.json");
    save(&pure, &path);
    let report = json(&ghdo(&["estimate", path.to_str().unwrap(), "--samples", "2000"]));
    let s2 = &report["estimates"]["renyi2"];
    let (mean, err) = (s2["mean"].as_f64().unwrap(), s2["std_error"].as_f64().unwrap());
    assert!(mean.abs() <= 3.0 * err + 1e-9, "S2 = {mean} ± {err}");
}

#[test]
fn estimate_rejects_wrong_version() {
    let dir = tempfile::tempdir().unwrap();
    let net = AghdoNetwork::new(spec(2, 1)).unwrap();
    let mut ck = Checkpoint::from_network(&net, 0, 0, 0.0);
    ck.version = "ghdo-ckpt-9".into();
    let path = dir.path().join("old.json");
    fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
    let out = ghdo(&["estimate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghdo-ckpt-1"));
}
