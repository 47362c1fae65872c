use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_stochwave"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const STABILITY: &str = r#"{
  "grid": {"M": 6, "N": 12, "T": 1.0},
  "coefficients": {"a": {"constant": 0.1}, "c": {"constant": 0.2}, "d": {"constant": 0.5}},
  "data": {"y0": {"sine": {"mode": 1, "amplitude": 1.0}}, "g": {"sine": {"mode": 1, "amplitude": 1.0}}},
  "pair": {"data": {"y0": {"sine": {"mode": 2, "amplitude": 0.3}}}},
  "mc": {"paths": 8, "master_seed": 5}
}"#;

#[test]
fn identities_on_random_functions() {
    let t = tempfile::tempdir().unwrap();
    let o = run(
        t.path(),
        "identities",
        r#"{"grid": {"M": 8, "N": 8, "T": 1.0}, "mc": {"master_seed": 3}}"#,
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(t.path().join("out/identities.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 14);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        let v: f64 = cols[1].parse().unwrap();
        assert!(v <= 1e-12, "{r}");
        assert_eq!(cols[2], "pass");
    }
}

#[test]
fn carleman_with_zero_data_is_all_zero() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "carleman", r#"{"grid": {"M": 4, "N": 8, "T": 1.0}}"#, &[]);
    assert_eq!(code(&o), 0);
    let rep = read_json(&t.path().join("out/carleman.json"));
    let terms: Vec<f64> = ["lhs", "rhs"]
        .iter()
        .flat_map(|side| {
            rep[side]
                .as_object()
                .unwrap()
                .values()
                .map(|v| v["mean"].as_f64().unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(terms.len(), 11);
    assert!(terms.iter().all(|&v| v == 0.0));
    assert!(rep["ratio"].is_null());
    let csv = fs::read_to_string(t.path().join("out/carleman.csv")).unwrap();
    assert!(csv.ends_with("ratio,undefined,\n"));
}

#[test]
fn carleman_sweep_rows_and_strict_admissibility() {
    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"M": 4, "N": 8, "T": 1.0},
        "data": {"y0": {"sine": {"mode": 1, "amplitude": 1.0}}},
        "sweep": {"parameter": "s", "values": [0.5, 1.0, 2.0]},
        "strict_admissibility": true}"#;
    let o = run(t.path(), "carleman", cfg, &["--paths", "2"]);
    // T = 1 cannot exceed sup|x - x*| / beta = 3 with the default weight
    assert_eq!(code(&o), 5);
    let csv = fs::read_to_string(t.path().join("out/carleman_sweep.csv")).unwrap();
    assert!(csv.starts_with("sweep_value,term,value,stderr\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 12);
    let sweep = read_json(&t.path().join("out/carleman_sweep.json"));
    assert_eq!(sweep.as_array().unwrap().len(), 3);
    assert_eq!(sweep[2]["report"]["s"].as_f64(), Some(2.0));
}

#[test]
fn stability_report_and_coupling_error() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "stability", STABILITY, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&t.path().join("out/stability.json"));
    assert!(rep["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(rep["paths"].as_u64(), Some(8));

    let bad = STABILITY.replace(r#""pair": {"data""#, r#""pair": {"master_seed": 6, "data""#);
    let o = run(t.path(), "stability", &bad, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coupling"));

    // the pair inherits the forcing unless it sets a different one
    let forced = STABILITY.replace(
        r#""g": {"sine""#,
        r#""f": {"sine": {"mode": 1, "amplitude": 2.0}}, "g": {"sine""#,
    );
    assert_eq!(code(&run(t.path(), "stability", &forced, &[])), 0);
    let clash = forced.replace(
        r#""pair": {"data": {"#,
        r#""pair": {"data": {"f": {"sine": {"mode": 3, "amplitude": 1.0}}, "#,
    );
    assert_eq!(code(&run(t.path(), "stability", &clash, &[])), 3);

    let missing = STABILITY.replace(r#""pair""#, r#""unused_pair""#);
    assert_eq!(code(&run(t.path(), "stability", &missing, &[])), 3);
}

#[test]
fn martingale_passes_and_needs_enough_paths() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "martingale", STABILITY, &["--paths", "200"]);
    assert_eq!(code(&o), 0);
    let rep = read_json(&t.path().join("out/martingale.json"));
    assert_eq!(rep["pass"], Value::Bool(true));
    assert_eq!(rep["paths"].as_u64(), Some(200));
    assert_eq!(code(&run(t.path(), "martingale", STABILITY, &[])), 3);
}

#[test]
fn simulate_and_weights_order_write_csvs() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(t.path(), "simulate", STABILITY, &[])), 0);
    let traj = fs::read_to_string(t.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("j,x,n,t,y"));
    assert_eq!(traj.lines().count(), 1 + 8 * 14);
    let flux = fs::read_to_string(t.path().join("out/flux.csv")).unwrap();
    assert_eq!(flux.lines().count(), 1 + 12);

    let t = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"M": 15, "N": 16, "T": 1.0},
        "weight": {"s": 1, "lambda": 1, "beta": 0.1, "xstar": 1.1, "mconst": 0.5}}"#;
    let o = run(t.path(), "weights-order", cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let orders = fs::read_to_string(t.path().join("out/orders.csv")).unwrap();
    for r in orders.lines().skip(1) {
        let p: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!((p - 2.0).abs() < 0.2, "{r}");
    }
    assert!(t.path().join("out/order_axdx_r_dt_rho.csv").exists());
}

#[test]
fn singular_update_maps_to_numeric_code() {
    let t = tempfile::tempdir().unwrap();
    // 1 - c dt = 0 with dt = 1/8
    let o = run(
        t.path(),
        "simulate",
        r#"{"grid": {"M": 4, "N": 8, "T": 1.0}, "coefficients": {"c": {"constant": 8.0}}}"#,
        &[],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn config_and_usage_errors() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), "simulate", r#"{"grid": {"N": 4, "T": 1.0}}"#, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/grid/M"));
    let o = run(
        t.path(),
        "simulate",
        r#"{"grid": {"M": 3, "N": 4, "T": 1.0}}"#,
        &["--paths", "many"],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage: stochwave"));
    let o = Command::new(env!("CARGO_BIN_EXE_stochwave"))
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn outputs_are_byte_identical_and_declared() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for sub in ["simulate", "carleman", "stability"] {
        assert_eq!(code(&run(a.path(), sub, STABILITY, &["--seed", "11"])), 0);
        assert_eq!(code(&run(b.path(), sub, STABILITY, &["--seed", "11"])), 0);
        let manifest = read_json(&a.path().join("out/manifest.json"));
        assert_eq!(manifest["subcommand"], sub);
        assert_eq!(manifest["overrides"]["seed"], "11");
        assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
        let mut declared: Vec<String> = manifest["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| {
                let name = f["file"].as_str().unwrap().to_string();
                let body = fs::read_to_string(a.path().join("out").join(&name)).unwrap();
                if name.ends_with(".csv") {
                    assert_eq!(f["rows"].as_u64().unwrap() as usize, body.lines().count() - 1);
                }
                name
            })
            .collect();
        declared.push("manifest.json".into());
        for name in &declared {
            let x = fs::read(a.path().join("out").join(name)).unwrap();
            let y = fs::read(b.path().join("out").join(name)).unwrap();
            assert_eq!(x, y, "{sub}: {name} differs");
        }
        fs::remove_dir_all(a.path().join("out")).unwrap();
        fs::remove_dir_all(b.path().join("out")).unwrap();
    }
}
