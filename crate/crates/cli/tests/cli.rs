use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn coco(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coco"))
        .current_dir(dir)
        .env_remove("COCO_THREADS")
        .args(args)
        .output()
        .expect("spawn coco")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = coco(dir, args);
    assert!(
        out.status.success(),
        "coco {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--seed", "1"];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn simulate_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "--model",
        "checkerbox",
        "--dims",
        "20,20,20",
        "--k",
        "2,2,2",
        "--sigma",
        "3",
    ];
    simulate(a.path(), &args);
    simulate(b.path(), &args);
    for f in ["tensor.coco", "truth.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let truth = json(&a.path().join("truth.json"));
    assert_eq!(truth["schema_version"], 1);
    assert_eq!(truth["dims"], serde_json::json!([20, 20, 20]));
    assert_eq!(truth["spec"]["config"]["command"], "simulate");
}

#[test]
fn invalid_fractions_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = coco(
        dir.path(),
        &["simulate", "--fractions", "0.5,0.7;0.5,0.5;0.5,0.5"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fractions"), "{err}");
}

#[test]
fn fit_endpoints() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(
        d,
        &[
            "--dims", "6,5,4", "--k", "2,2,2", "--sigma", "1", "--out", "x.txt",
        ],
    );
    ok(
        d,
        &[
            "fit", "x.txt", "--gamma", "0", "--uhat", "u0.txt", "--out", "f0.json",
        ],
    );
    let x = fs::read_to_string(d.join("x.txt")).unwrap();
    let u = fs::read_to_string(d.join("u0.txt")).unwrap();
    assert_eq!(x, u);
    let f0 = json(&d.join("f0.json"));
    assert_eq!(f0["co_cluster_count"], 120);
    assert_eq!(f0["method"], "coco");

    ok(d, &["fit", "x.txt", "--gamma", "1e9", "--out", "f1.json"]);
    let f1 = json(&d.join("f1.json"));
    assert_eq!(f1["co_cluster_count"], 1);
    assert_eq!(f1["converged"], true);
    let xs: Vec<f64> = x
        .split_whitespace()
        .skip(4)
        .map(|v| v.parse().unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((f1["means"][0].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!(f1["gap"].as_f64().unwrap().is_finite());
    assert_eq!(f1["config"]["args"]["gamma"], 1e9);
}

#[test]
fn path_recovers_checkerbox_and_evaluates() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(d, &["--dims", "15,15,15", "--k", "2,2,2", "--sigma", "0.5"]);
    ok(d, &["path", "tensor.coco"]);
    let csv = fs::read_to_string(d.join("path.csv")).unwrap();
    assert!(csv.starts_with("gamma,rss,df,ebic,gap,iters,k_mode_1,k_mode_2,k_mode_3\n"));
    let sel = json(&d.join("selected.json"));
    assert_eq!(sel["schema_version"], 1);
    assert_eq!(sel["config"]["command"], "path");

    let out = ok(d, &["evaluate", "truth.json", "selected.json"]);
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "mode,ari,vi");
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 1.0, "{row}");
    }

    ok(
        d,
        &[
            "export-heatmap",
            "selected.json",
            "tensor.coco",
            "--rows",
            "1",
            "--cols",
            "3",
            "--fixed",
            "1,4,1",
        ],
    );
    let heat = fs::read_to_string(d.join("heatmap.csv")).unwrap();
    let labels: Vec<u64> = sel["labels"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let col_labels: Vec<u64> = sel["labels"][2]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let mut lines = heat.lines();
    let cols: Vec<usize> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(cols.len(), 15);
    // blockwise constant: equal (row label, column label) pairs carry equal values
    let mut seen = std::collections::HashMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let r: usize = f[0].parse().unwrap();
        for (v, &c) in f[1..].iter().zip(&cols) {
            let v: f64 = v.parse().unwrap();
            let key = (labels[r - 1], col_labels[c - 1]);
            let prev = *seen.entry(key).or_insert(v);
            assert!((prev - v).abs() < 1e-9);
        }
    }
    assert_eq!(seen.len(), 4);
}

#[test]
fn evaluate_truth_against_itself() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(d, &["--dims", "8,6,4", "--k", "3,2,2"]);
    ok(
        d,
        &["evaluate", "truth.json", "truth.json", "--out", "eval.csv"],
    );
    let table = fs::read_to_string(d.join("eval.csv")).unwrap();
    assert_eq!(table, "mode,ari,vi\n1,1,0\n2,1,0\n3,1,0\nco,1,0\n");
}

#[test]
fn evaluate_rejects_schema_mismatch() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(d, &["--dims", "6,6", "--k", "2,2"]);
    let mut truth = json(&d.join("truth.json"));
    truth["schema_version"] = 99.into();
    fs::write(d.join("bad.json"), truth.to_string()).unwrap();
    let out = coco(d, &["evaluate", "truth.json", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // squared norms overflow
    fs::write(d.join("big.txt"), "2 2 2\n1e300 -1e300 1e300 -1e300\n").unwrap();
    let out = coco(d, &["fit", "big.txt", "--gamma", "1"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    fs::write(d.join("nan.txt"), "2 2 2\n1 NaN 3 4\n").unwrap();
    let out = coco(d, &["fit", "nan.txt", "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_writes_report() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    simulate(
        d,
        &["--model", "half-moons", "--dims", "12", "--sigma", "0.1"],
    );
    ok(
        d,
        &[
            "baseline",
            "tensor.coco",
            "--b-refs",
            "5",
            "--k-max",
            "4",
            "--restarts",
            "3",
            "--seed",
            "2",
        ],
    );
    let r = json(&d.join("baseline.json"));
    assert_eq!(r["method"], "cpd-kmeans");
    assert_eq!(r["dims"], serde_json::json!([12, 12, 12]));
    assert!(r["config"]["selected_rank"].as_u64().unwrap() >= 2);
    let first = fs::read(d.join("baseline.json")).unwrap();
    ok(
        d,
        &[
            "--threads",
            "1",
            "baseline",
            "tensor.coco",
            "--b-refs",
            "5",
            "--k-max",
            "4",
            "--restarts",
            "3",
            "--seed",
            "2",
        ],
    );
    assert_eq!(first, fs::read(d.join("baseline.json")).unwrap());
}

#[test]
fn threads_from_env() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_coco"))
        .current_dir(dir.path())
        .env("COCO_THREADS", "2")
        .args(["simulate", "--dims", "4,4", "--k", "2,2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_coco"))
        .current_dir(dir.path())
        .env("COCO_THREADS", "many")
        .args(["simulate", "--dims", "4,4", "--k", "2,2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
