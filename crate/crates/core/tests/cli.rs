mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use serde_json::Value;
use shapereg::isotonic::{isotonic_kkt, Direction};
use shapereg::projection::{verify_projection, ConeSpec, FitResult, Series};
use shapereg::shapes::{matrix_kkt, verify_convex_characterization};

const TOL: f64 = 1e-9;

fn shapereg(args: &[&str]) -> (i32, Vec<u8>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_shapereg"))
        .args(args)
        .env_remove("SHAPEREG_CACHE_DIR")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout, String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json_of(args: &[&str]) -> Value {
    let (code, out, err) = shapereg(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    serde_json::from_slice(&out).expect("json output")
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(|a| a.as_f64().expect("number")).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn noisy_series(n: usize, seed: u64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let e = gaussian_vec(&mut rng(seed), n);
    let x: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let y = x.iter().zip(&e).map(|(&t, &z)| f(t) + 0.3 * z).collect();
    (x, y)
}

fn csv_xy(x: &[f64], y: &[f64]) -> String {
    let mut s = String::from("x,y\n");
    for (a, b) in x.iter().zip(y) {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

#[test]
fn isotonic_round_trip_recertifies() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_series(200, 1, |t| t * t);
    let p = write(dir.path(), "iso.csv", &csv_xy(&x, &y));
    let v = json_of(&["fit-iso", p.to_str().unwrap()]);
    assert_eq!(v["schema"], "shapereg/1");
    assert_eq!(v["command"], "fit-iso");
    let theta = floats(&v["theta_hat"]);
    assert!(isotonic_kkt(&y, &vec![1.0; y.len()], &theta, Direction::Nondecreasing) <= TOL);
    assert!(theta.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn convex_round_trip_recertifies() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_series(150, 2, |t| (t - 0.4).powi(2) * 4.0);
    let p = write(dir.path(), "cvx.csv", &csv_xy(&x, &y));
    let v = json_of(&["fit-convex", p.to_str().unwrap()]);
    let fit = FitResult {
        theta_hat: floats(&v["theta_hat"]),
        blocks: Vec::new(),
        knots: v["knots"].as_array().unwrap().iter().map(|k| k.as_u64().unwrap() as usize).collect(),
        sse: v["sse"].as_f64().unwrap(),
        kkt_residual: 0.0,
        iterations: 0,
    };
    let s = Series::new(x, y).unwrap();
    assert!(verify_convex_characterization(&s, &fit) <= TOL * (1.0 + fit.sse));
}

#[test]
fn kmonotone_round_trip_recertifies() {
    let dir = tempfile::tempdir().unwrap();
    let (_, y) = noisy_series(30, 3, |t| t.powi(3));
    let text: String = std::iter::once("y\n".to_string()).chain(y.iter().map(|v| format!("{v}\n"))).collect();
    let p = write(dir.path(), "k.csv", &text);
    let v = json_of(&["fit-kmono", p.to_str().unwrap(), "--k", "3"]);
    let theta = floats(&v["theta_hat"]);
    let cone = ConeSpec::k_monotone(y.len(), 3).unwrap();
    assert!(cone.max_violation(&theta) <= 1e-8);
    let ynorm = norm_sq(&y).sqrt();
    let probes: Vec<Vec<f64>> = cone
        .probes
        .iter()
        .map(|p| p.iter().map(|a| a * ynorm / norm_sq(p).sqrt()).collect())
        .collect();
    assert!(verify_projection(&y, &theta, &probes) <= 1e-8);
}

#[test]
fn matrix_round_trip_recertifies() {
    let dir = tempfile::tempdir().unwrap();
    let e = gaussian_vec(&mut rng(4), 48);
    let mut text = String::new();
    let mut flat = Vec::new();
    for i in 0..6 {
        let row: Vec<f64> = (0..8).map(|j| (i + j) as f64 / 12.0 + 0.5 * e[i * 8 + j]).collect();
        text.push_str(&row.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        text.push('\n');
        flat.extend(row);
    }
    let p = write(dir.path(), "m.csv", &text);
    let v = json_of(&["fit-matrix", p.to_str().unwrap()]);
    let theta: Vec<f64> = v["theta_hat"].as_array().unwrap().iter().flat_map(floats).collect();
    assert!(matrix_kkt(&flat, &theta, 6, 8) <= 1e-8);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_series(300, 5, |t| t);
    let p = write(dir.path(), "s.csv", &csv_xy(&x, &y));
    let p = p.to_str().unwrap();
    for args in [
        vec!["fit-iso", p],
        vec!["fit-unimodal", p],
        vec!["fit-convex", p],
        vec!["ci-bootstrap", p, "--t", "0.5", "--reps", "200", "--seed", "9"],
        vec!["ci-bootstrap", p, "--t", "0.4", "--reps", "200", "--scheme", "pairs", "--seed", "9"],
    ] {
        let a = shapereg(&args);
        let b = shapereg(&args);
        assert_eq!(a.0, 0, "{args:?}: {}", a.2);
        assert_eq!(a.1, b.1, "{args:?}");
    }
}

#[test]
fn risk_simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "scenarios": [
            {"id": "ramp", "family": "isotonic", "truth": {"kind": "ramp", "v": 1.0}, "n": 50, "sigma": 1.0},
            {"id": "blocks", "family": "isotonic", "truth": {"kind": "blocks", "k": 2}, "n": 60, "sigma": 0.5, "error_law": "t5"}
        ],
        "estimators": ["lse", "oracle"],
        "p": [1.0, 2.0],
        "reps": 40,
        "seed": 123
    }"#;
    let sp = write(dir.path(), "spec.json", spec);
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let (code, _, err) = shapereg(&["risk-sim", sp.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    let a = std::fs::read(&out1).unwrap();
    assert_eq!(a, std::fs::read(&out2).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);

    let out3 = dir.path().join("c.csv");
    shapereg(&["risk-sim", sp.to_str().unwrap(), "--seed", "124", "--out", out3.to_str().unwrap()]);
    assert_ne!(std::fs::read(&out1).unwrap(), std::fs::read(&out3).unwrap());
}

#[test]
fn null_tables_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("lrs.bin");
    let (code, out, err) = shapereg(&["sim-lrs-null", "--n", "200", "--reps", "1000", "--out", table.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    let summary: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(summary["command"], "sim-lrs-null");
    let t = shapereg::inference::NullTable::read_from(&table).unwrap();
    assert_eq!(t.len(), 1000);
    assert_eq!(t.seed(), 3);

    let (x, y) = noisy_series(200, 6, |t| t);
    let p = write(dir.path(), "s.csv", &csv_xy(&x, &y));
    let v = json_of(&["ci-lrs", p.to_str().unwrap(), "--t", "0.5", "--table", table.to_str().unwrap()]);
    let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo < hi);
}

#[test]
fn exit_codes_distinguish_usage_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shapereg(&["fit-iso", "/definitely/missing.csv"]).0, 1);
    assert_eq!(shapereg(&["no-such-command"]).0, 1);
    let bad = write(dir.path(), "bad.csv", "y\n1\nabc\n");
    assert_eq!(shapereg(&["fit-iso", bad.to_str().unwrap()]).0, 1);
    let short = write(dir.path(), "short.csv", "y\n1\n2\n3\n");
    assert_eq!(shapereg(&["fit-kmono", short.to_str().unwrap(), "--k", "3"]).0, 1);
    let flat = write(dir.path(), "flat.csv", "1,0,0\n1,0,1\n1,0,2\n");
    assert_eq!(shapereg(&["fit-sindex", flat.to_str().unwrap(), "--directions", "8"]).0, 2);
    assert_eq!(shapereg(&["--help"]).0, 0);
}
