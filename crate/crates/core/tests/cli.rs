use std::path::Path;
use std::process::{Command, Output};

use rbfprune::io::csv::{load_csv, CsvOptions};
use rbfprune::io::model_file::load_network;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbfprune"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> serde_json::Value {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(stdout.lines().last().unwrap()).unwrap()
}

fn error_kind(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(!out.status.success(), "{args:?} should fail");
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["message"].is_string());
    err["error"].as_str().unwrap().to_string()
}

#[test]
fn gen_toy_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-toy", "--n", "1000", "--seed", "7", "--out", "a.csv"], dir.path());
    ok(&["gen-toy", "--n", "1000", "--seed", "7", "--out", "b.csv"], dir.path());
    ok(&["gen-toy", "--n", "1000", "--seed", "8", "--out", "c.csv"], dir.path());
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    let data = load_csv(&dir.path().join("a.csv"), &CsvOptions::default()).unwrap();
    assert_eq!((data.len(), data.dim()), (1000, 1));
}

#[test]
fn train_eval_prune_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-toy", "--n", "300", "--seed", "1", "--out", "toy.csv"], d);
    ok(&["train", "--data", "toy.csv", "--num-centroids", "12", "--model-out", "m.json", "--report-out", "r.jsonl"], d);
    let report = std::fs::read_to_string(d.join("r.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(last["record"], "summary");
    assert!(report.lines().count() > 1);

    let eval = ok(&["eval", "--model", "m.json", "--data", "toy.csv", "--out", "pred.csv"], d);
    let net = load_network(&d.join("m.json")).unwrap();
    let data = load_csv(&d.join("toy.csv"), &CsvOptions::default()).unwrap();
    let mse = net.mse_loss(&data).unwrap();
    let rmse = eval["rmse"].as_f64().unwrap();
    assert!((rmse - mse.sqrt()).abs() <= 1e-12 * mse.sqrt());
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "row,prediction,response");
    assert_eq!(pred.lines().count(), 301);

    // M = K reproduces the large network exactly
    let copy = ok(&["prune", "--model", "m.json", "--dist", "std_normal", "--target-centroids", "12", "--restarts", "2", "--model-out", "same.json"], d);
    assert!(copy["objective"].as_f64().unwrap() <= 1e-9);

    ok(&["prune", "--model", "m.json", "--dist", "uniform(-4,4)", "--target-centroids", "2", "--restarts", "3", "--model-out", "s.json", "--report-out", "p.jsonl"], d);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(d.join("p.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    let summary = &lines[3];
    let obj = summary["objective"].as_f64().unwrap();
    assert!((summary["sqrt_objective"].as_f64().unwrap() - obj.sqrt()).abs() < 1e-15);

    ok(&["curve", "--model", "s.json", "--from", "-4", "--to", "4", "--steps", "9", "--out", "curve.csv"], d);
    let curve = std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 10);
    assert!(curve.lines().nth(1).unwrap().starts_with("-4,"));
    assert!(curve.lines().last().unwrap().starts_with("4,"));

    ok(&["export-centroids", "--model", "s.json", "--out", "c.csv"], d);
    let cents = std::fs::read_to_string(d.join("c.csv")).unwrap();
    assert_eq!(cents.lines().next().unwrap(), "index,beta,theta0");
    assert_eq!(cents.lines().count(), 3);
}

#[test]
fn eval_without_responses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-toy", "--n", "50", "--out", "toy.csv"], d);
    ok(&["train", "--data", "toy.csv", "--num-centroids", "4", "--max-epochs", "5", "--model-out", "m.json"], d);
    std::fs::write(d.join("x.csv"), "x0\n0.5\n-1\n").unwrap();
    let eval = ok(&["eval", "--model", "m.json", "--data", "x.csv", "--out", "p.csv"], d);
    assert_eq!(eval["rows"], 2);
    assert!(eval.get("rmse").is_none());
    let pred = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "row,prediction");
}

#[test]
fn config_file_and_binary_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("a,b,c,y\n");
    for i in 0..40 {
        let (a, b, c) = (i % 2, (i / 2) % 2, (i / 4) % 2);
        csv += &format!("{a},{b},{c},{}\n", a as f64 - 0.5 * b as f64 + 0.25 * c as f64);
    }
    std::fs::write(d.join("bin.csv"), csv).unwrap();
    std::fs::write(
        d.join("run.toml"),
        "[train]\nnum_centroids = 6\nmax_epochs = 40\ninit_log_gamma = -1.0\n\n[prune]\ntarget_centroids = 2\nrestarts = 2\n\n[data]\nbinary_to_pm1 = true\n\n[dist]\nkind = \"bernoulli\"\nq = [0.5]\n",
    )
    .unwrap();
    ok(&["--config", "run.toml", "train", "--data", "bin.csv", "--model-out", "m.json"], d);
    let net = load_network(&d.join("m.json")).unwrap();
    assert_eq!((net.dim(), net.num_centroids()), (3, 6));
    assert!(net.theta().as_slice().iter().all(|v| v.abs() < 2.0));
    let out = ok(&["--config", "run.toml", "prune", "--model", "m.json", "--model-out", "s.json"], d);
    assert_eq!(out["dist"], "bernoulli");
    assert_eq!(out["target_centroids"], 2);
}

#[test]
fn verify_bernoulli_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "--suite", "bernoulli", "--seed", "3"], dir.path());
    assert_eq!(out["suite"], "bernoulli");
    assert_eq!(out["passed"], true);
    assert!(out["max_rel_error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(error_kind(&["eval", "--model", "missing.json", "--data", "x.csv"], d), "io");
    std::fs::write(d.join("bad.json"), "{\"schema_version\": 99}").unwrap();
    assert_eq!(error_kind(&["export-centroids", "--model", "bad.json", "--out", "c.csv"], d), "schema");
    assert_eq!(error_kind(&["frobnicate"], d), "usage");
    std::fs::write(d.join("bad.toml"), "[train]\nbogus = 1\n").unwrap();
    assert_eq!(error_kind(&["--config", "bad.toml", "gen-toy", "--out", "t.csv"], d), "config");

    ok(&["gen-toy", "--n", "60", "--out", "toy.csv"], d);
    ok(&["train", "--data", "toy.csv", "--num-centroids", "3", "--max-epochs", "2", "--model-out", "m.json"], d);
    std::fs::write(d.join("wide.csv"), "a,b,c,y\n1,2,3,4\n").unwrap();
    assert_eq!(error_kind(&["eval", "--model", "m.json", "--data", "wide.csv"], d), "dimension_mismatch");
    assert_eq!(error_kind(&["prune", "--model", "m.json", "--model-out", "s.json"], d), "missing_argument");
    std::fs::write(d.join("dist.toml"), "[dist]\nkind = \"uniform\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\n").unwrap();
    assert_eq!(
        error_kind(&["--config", "dist.toml", "prune", "--model", "m.json", "--model-out", "s.json"], d),
        "dimension_mismatch"
    );
}
