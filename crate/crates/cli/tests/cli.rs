use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tc"))
        .args(args)
        .env("TC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tc(args);
    assert!(
        out.status.success(),
        "tc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn hypercube_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["generate", "--dataset", "hypercube", "--n", "100", "--d", "30", "--seed", "7", "--out", s(out)]);
    }
    for name in ["X.csv", "Y.csv"] {
        let text = std::fs::read(a.join(name)).unwrap();
        assert_eq!(text, std::fs::read(b.join(name)).unwrap());
        let text = String::from_utf8(text).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 30);
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 100);
        assert!(rows.iter().all(|r| r.split(',').count() == 30));
    }
    assert!(!a.join("labels.csv").exists());
}

#[test]
fn manifest_lists_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["generate", "--dataset", "moons8g", "--n", "64", "--out", s(dir.path())]);
    let manifest: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["dataset"], "moons8g");
    assert_eq!(manifest["n_x"], 64);
    assert_eq!(manifest["dim"], 2);
    for f in manifest["files"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).exists());
    }
}

#[test]
fn disconnected_sbm_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tc(&["generate", "--dataset", "sbm", "--n", "20", "--k", "2", "--p", "0", "--q", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disconnected"));
}

#[test]
fn sbm_cost_file_solves() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--dataset", "sbm", "--n", "40", "--k", "4", "--seed", "3", "--out", s(dir.path())]);
    let rep = dir.path().join("r.json");
    let cost = dir.path().join("cost.csv");
    ok(&["solve", "--cost", s(&cost), "--x", s(&dir.path().join("X.csv")), "--rank", "4", "--out", s(&rep)]);
    let r = report(&rep);
    assert_eq!(r["n"], 40);
    assert!(r["ari_x"].as_f64().is_some());
    assert!(r["cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn separated_toy_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--dataset", "shifted-gaussians", "--n", "100", "--k", "4", "--sigma2", "0.01", "--seed", "2", "--out", s(dir.path())]);
    let rep = dir.path().join("out").join("report.json");
    ok(&[
        "solve",
        "--x",
        s(&dir.path().join("X.csv")),
        "--y",
        s(&dir.path().join("Y.csv")),
        "--rank",
        "4",
        "--seed",
        "2",
        "--out",
        s(&rep),
    ]);
    let r = report(&rep);
    assert_eq!(r["ari_x"].as_f64(), Some(1.0));
    assert_eq!(r["ari_y"].as_f64(), Some(1.0));
    assert!(r["cta"].as_f64().unwrap() > 0.99);
    assert_eq!(r["config"]["rank"], 4);
    assert_eq!(r["config"]["registration"], "monge");
    let gamma = r["gamma_achieved"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&gamma));
    for key in ["transport", "registration", "init", "solve", "total"] {
        assert!(r["runtime_ms"][key].as_f64().unwrap() >= 0.0);
    }

    let q = std::fs::read_to_string(rep.with_file_name("Q.csv")).unwrap();
    assert_eq!(q.lines().count(), 100);
    assert!(q.lines().all(|l| l.split(',').count() == 4));
    let g: f64 = std::fs::read_to_string(rep.with_file_name("g.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse::<f64>().unwrap())
        .sum();
    assert!((g - 1.0).abs() < 1e-9);
}

#[test]
fn rank_one_gives_the_mean_cost() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let y = dir.path().join("y.csv");
    std::fs::write(&x, "x0,x1\n0,0\n1,0\n0,2\n").unwrap();
    std::fs::write(&y, "x0,x1\n3,1\n-1,0\n2,2\n").unwrap();
    let rep = dir.path().join("r.json");
    ok(&["solve", "--x", s(&x), "--y", s(&y), "--rank", "1", "--out", s(&rep)]);
    let xs: [(f64, f64); 3] = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0)];
    let ys: [(f64, f64); 3] = [(3.0, 1.0), (-1.0, 0.0), (2.0, 2.0)];
    let mut mean = 0.0;
    for a in xs {
        for b in ys {
            mean += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
        }
    }
    mean /= 9.0;
    let cost = report(&rep)["cost"].as_f64().unwrap();
    assert!((cost - mean).abs() < 1e-9, "{cost} vs {mean}");
    assert_eq!(report(&rep)["ari_x"], Value::Null);
}

#[test]
fn usage_errors_exit_one() {
    let out = tc(&["solve", "--x", "a.csv", "--y", "b.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--rank"));
    assert_eq!(tc(&["solve", "--rank", "2"]).status.code(), Some(1));
    assert_eq!(tc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tc(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "x0,x1\n0,zero\n").unwrap();
    let out = tc(&["solve", "--x", s(&x), "--y", s(&x), "--rank", "1", "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    let out = tc(&["solve", "--x", s(&missing), "--y", s(&missing), "--rank", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_many_clusters_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, "x0\n0\n1\n").unwrap();
    let out = tc(&["solve", "--x", s(&x), "--y", s(&x), "--rank", "3", "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_hold_on_random_instances() {
    for class in ["l2", "sql2", "metric"] {
        let out = ok(&["verify-bounds", "--trials", "10", "--n", "6", "--rank", "2", "--cost-class", class, "--seed", "5"]);
        let r: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(r["violations"].as_array().unwrap().len(), 0);
        assert!(r["max_lhs_over_bound"].as_f64().unwrap() <= 1.0 + 1e-9);
    }
}

#[test]
fn lower_bound_construction_reports_ratio() {
    let out = ok(&["verify-bounds", "--trials", "0", "--lb", "euclidean", "--lb-k", "40", "--lb-eps", "1e-4", "--lb-min-ratio", "1.5"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lb = &r["lower_bound"];
    assert_eq!(lb["monge_is_identity"], true);
    assert!((lb["monge_cost"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(lb["ratio"].as_f64().unwrap() >= 1.5);

    let out = tc(&["verify-bounds", "--trials", "0", "--lb", "euclidean", "--lb-k", "40", "--lb-min-ratio", "100"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn w2_estimates_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w2.csv");
    ok(&["estimate-w2", "--d", "30", "--rank", "10", "--n-grid", "29,44", "--runs", "2", "--seed", "1", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,plugin,tc,truth,plugin_error,tc_error");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 29.0);
    for r in &rows {
        assert_eq!(r[3], 8.0);
        assert!((r[4] - (r[1] - 8.0).abs()).abs() < 1e-9);
        assert!(r[1] > r[2]);
    }
}

#[test]
fn rank_sweep_is_non_increasing() {
    let out = ok(&["ablate", "--sweep", "rank", "--n", "128", "--ranks", "1,2,4,8"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let costs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(costs.len(), 4);
    assert!(costs.windows(2).all(|w| w[1] <= w[0] * 1.01));
}
