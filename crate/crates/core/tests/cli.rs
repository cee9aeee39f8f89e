use std::path::{Path, PathBuf};

use kb_core::cli::run;
use kb_core::io::{load_measure, save_measure};
use kb_core::linalg::PsdMatrix;
use kb_core::{GridSpec, MatrixMeasure};
use serde_json::Value;
use tempfile::TempDir;

fn kb(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("kb").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, name: &str, dim: usize, n: usize, generator: &str, mass: f64) -> PathBuf {
    let file = dir.path().join(name);
    let (d, n, m) = (dim.to_string(), n.to_string(), mass.to_string());
    let (code, _) = kb(&[
        "synth",
        "--dim",
        &d,
        "--n",
        &n,
        "--generator",
        generator,
        "--mass",
        &m,
        "--out",
        s(&file),
    ]);
    assert_eq!(code, 0);
    file
}

const SMOOTH: &str = r#"{"kind":"smooth","floor":0.5,"amplitude":1}"#;

#[test]
fn distance_to_zero_is_twice_the_radius() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 2, 8, SMOOTH, 3.0);
    let (code, out) = kb(&["distance", "--a", s(&a), "--b", "zero"]);
    assert_eq!(code, 0);
    let rep = json(&out);
    let d = rep["distance"].as_f64().unwrap();
    assert!(
        (d - 2.0 * 3f64.sqrt()).abs() < 0.01 * 2.0 * 3f64.sqrt(),
        "d = {d}"
    );
    assert_eq!(rep["converged"], Value::Bool(true));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 1, 8, SMOOTH, 1.0);
    let b = synth(
        &dir,
        "b.kbm",
        1,
        8,
        r#"{"kind":"constant","matrix":[[1.0]]}"#,
        1.0,
    );
    let args = ["--nt", "6", "distance", "--a", s(&a), "--b", s(&b)];
    let first = kb(&args);
    let second = kb(&args);
    assert_eq!(first.0, 0);
    assert_eq!(first, second);
}

#[test]
fn validate_reports_the_first_bad_cell() {
    let dir = TempDir::new().unwrap();
    let good = synth(
        &dir,
        "good.kbm",
        1,
        4,
        r#"{"kind":"constant","matrix":[[2.0]]}"#,
        1.0,
    );
    let (code, out) = kb(&["validate", "--a", s(&good)]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["valid"], Value::Bool(true));

    // a 1-d scalar file stores one f64 per cell after the 12-byte header
    let mut bytes = std::fs::read(&good).unwrap();
    bytes[12 + 2 * 8..12 + 3 * 8].copy_from_slice(&(-1.0f64).to_le_bytes());
    let bad = dir.path().join("bad.kbm");
    std::fs::write(&bad, bytes).unwrap();
    let (code, out) = kb(&["validate", "--a", s(&bad)]);
    assert_eq!(code, 1);
    let rep = json(&out);
    assert_eq!(rep["valid"], Value::Bool(false));
    assert_eq!(rep["first_invalid_cell"], 2);
    assert!(load_measure(&bad).is_err());
}

#[test]
fn argument_errors_and_help() {
    assert_eq!(kb(&["distance", "--bogus"]).0, 1);
    assert_eq!(kb(&["--help"]).0, 0);
    assert_eq!(kb(&["distance", "--b", "zero"]).0, 1);
    assert_eq!(
        kb(&["--nt", "0", "distance", "--a", "x", "--b", "zero"]).0,
        1
    );
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 1, 8, SMOOTH, 1.0);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "a = {:?}\nb = \"zero\"\n\n[solver]\nnt = 4\nmax_iter = 3000\n",
            s(&a)
        ),
    )
    .unwrap();
    let (code, out) = kb(&["--config", s(&cfg), "distance"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["config"]["nt"], 4);
    let (code, out) = kb(&["--config", s(&cfg), "--nt", "6", "distance"]);
    assert_eq!(code, 0);
    let rep = json(&out);
    assert_eq!(rep["config"]["nt"], 6);
    assert_eq!(rep["config"]["max_iter"], 3000);

    std::fs::write(&cfg, "[solver]\nwarp = 9\n").unwrap();
    assert_eq!(kb(&["--config", s(&cfg), "distance"]).0, 1);
}

#[test]
fn unconverged_solve_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 1, 8, SMOOTH, 1.0);
    let (code, out) = kb(&["--max-iter", "2", "distance", "--a", s(&a), "--b", "zero"]);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["converged"], Value::Bool(false));
}

#[test]
fn geodesic_writes_frames_matching_the_endpoints() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 1, 8, SMOOTH, 1.0);
    let b = synth(
        &dir,
        "b.kbm",
        1,
        8,
        r#"{"kind":"bump","center":[0.5],"width":0.1,"matrix":[[1.0]]}"#,
        2.0,
    );
    assert_eq!(kb(&["geodesic", "--a", s(&a), "--b", s(&b)]).0, 1);

    let frames = dir.path().join("geo");
    let (code, out) = kb(&[
        "--nt",
        "8",
        "--output",
        s(&frames),
        "geodesic",
        "--a",
        s(&a),
        "--b",
        s(&b),
    ]);
    assert_eq!(code, 0);
    let index = json(&out);
    let listed = index["frames"].as_array().unwrap();
    assert_eq!(listed.len(), 5);
    assert_eq!(
        json(&std::fs::read_to_string(frames.join("index.json")).unwrap()),
        index
    );

    let first = load_measure(frames.join("frame_000.kbm")).unwrap();
    let last = load_measure(frames.join("frame_004.kbm")).unwrap();
    assert_eq!(
        first.to_upper_vec(),
        load_measure(&a).unwrap().to_upper_vec()
    );
    assert_eq!(
        last.to_upper_vec(),
        load_measure(&b).unwrap().to_upper_vec()
    );
    let masses: Vec<f64> = listed.iter().map(|f| f["mass"].as_f64().unwrap()).collect();
    assert!((masses[0] - 1.0).abs() < 1e-12 && (masses[4] - 2.0).abs() < 1e-12);
}

#[test]
fn spherical_distance_ignores_mass() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.kbm", 1, 8, SMOOTH, 1.0);
    let b = synth(&dir, "b.kbm", 1, 8, SMOOTH, 5.0);
    let (code, out) = kb(&["spherical", "--a", s(&a), "--b", s(&b)]);
    assert_eq!(code, 0);
    let rep = json(&out);
    assert!(rep["spherical_distance"].as_f64().unwrap() < 1e-3);
    assert!((rep["radius_b"].as_f64().unwrap() - 5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn entropy_flow_dissipates_and_saves_frames() {
    let dir = TempDir::new().unwrap();
    let grid = GridSpec::new(2, 8).unwrap();
    let g = MatrixMeasure::from_fn(grid, |x| {
        let s = (2.0 * std::f64::consts::PI * x[0]).sin();
        *PsdMatrix::diag(&[1.5 + s, 1.0]).unwrap().sym()
    })
    .unwrap();
    let a = dir.path().join("a.kbm");
    save_measure(&g, &a).unwrap();
    let out_dir = dir.path().join("flow");
    let (code, out) = kb(&[
        "--output",
        s(&out_dir),
        "flow",
        "--a",
        s(&a),
        "--functional",
        "entropy",
        "--steps",
        "40",
        "--frames",
        "3",
    ]);
    assert_eq!(code, 0);
    let rep = json(&out);
    assert_eq!(rep["dissipative"], Value::Bool(true));
    assert!(rep["final_value"].as_f64().unwrap() < rep["initial_value"].as_f64().unwrap());
    assert_eq!(rep["frames"].as_array().unwrap().len(), 3);
    assert!(out_dir.join("frame_002.kbm").exists());

    let cap = rep["stability_cap"].as_f64().unwrap();
    let too_big = (3.0 * cap).to_string();
    assert_eq!(
        kb(&[
            "flow",
            "--a",
            s(&a),
            "--functional",
            "volume",
            "--dt",
            &too_big
        ])
        .0,
        1
    );
}
