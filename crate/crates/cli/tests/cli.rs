use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsi")).args(args).env_remove("LSI_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small pendulum dataset and an LSI model trained on it.
fn pendulum_model(dir: &TempDir) -> PathBuf {
    let data = path(dir, "data.json");
    let model = path(dir, "model.json");
    let out = lsi(&["gen-data", "--system", "pendulum", "--n-traj", "12", "--traj-len", "4", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = lsi(&["train", "--data", s(&data), "--out", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    model
}

fn csv_rows(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&lsi(&["--help"])), 0);
    assert_eq!(code(&lsi(&[])), 2);
    assert_eq!(code(&lsi(&["gen-data", "--bogus"])), 2);
    assert_eq!(code(&lsi(&["analyze", "spectrum"])), 2);
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    let out = lsi(&["gen-data", "--system", "pendulum", "--h", "0.5", "--h-fine", "0.3", "--out", s(&data)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error: "));
    assert_eq!(code(&lsi(&["train", "--data", s(&path(&dir, "missing.json")), "--out", s(&data)])), 1);
    assert_eq!(code(&lsi(&["train", "--data", s(&data)])), 2);
}

#[test]
fn thread_setting_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_lsi"))
        .args(["gen-data", "--n-traj", "1"])
        .env("LSI_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    let out = Command::new(env!("CARGO_BIN_EXE_lsi"))
        .args(["gen-data", "--n-traj", "2", "--traj-len", "3", "--out", s(&data)])
        .env("LSI_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let config = path(&dir, "config.json");
    std::fs::write(&config, r#"{"n_traj": 3, "traj_len": 4}"#).unwrap();
    let data = path(&dir, "d.json");
    let out = lsi(&["--config", s(&config), "gen-data", "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("trajectories 3"), "{}", stdout(&out));
    let out = lsi(&["gen-data", "--config", s(&config), "--n-traj", "5", "--out", s(&data)]);
    assert!(stdout(&out).contains("trajectories 5"), "{}", stdout(&out));
    assert!(stdout(&out).contains("triples 10"), "{}", stdout(&out));

    std::fs::write(&config, "{not json").unwrap();
    assert_eq!(code(&lsi(&["--config", s(&config), "gen-data", "--out", s(&data)])), 2);
    std::fs::write(&config, "[1, 2]").unwrap();
    assert_eq!(code(&lsi(&["--config", s(&config), "gen-data", "--out", s(&data)])), 2);
}

#[test]
fn train_rejects_inconsistent_requests() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    assert_eq!(code(&lsi(&["gen-data", "--n-traj", "3", "--traj-len", "4", "--out", s(&data)])), 0);
    let out = lsi(&["train", "--method", "lgp-exact", "--data", s(&data), "--out", s(&path(&dir, "m.json"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = lsi(&["train", "--epsilon", "-1", "--data", s(&data), "--out", s(&path(&dir, "m.json"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = lsi(&[
        "train",
        "--method",
        "lgp-exact",
        "--system",
        "pendulum",
        "--data",
        s(&data),
        "--out",
        s(&path(&dir, "m.json")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("lgp-exact"), "{}", stdout(&out));
}

#[test]
fn predict_then_analyze() {
    let dir = TempDir::new().unwrap();
    let model = pendulum_model(&dir);
    let traj = path(&dir, "pred.csv");
    let out = lsi(&[
        "predict",
        "--model",
        s(&model),
        "--q0",
        "0.4",
        "--qdot0",
        "-0.1",
        "--steps",
        "20",
        "--with-velocities",
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,q1,qd1,p1");
    assert_eq!(csv_rows(&traj).len(), 21);
    // Seventeen significant digits survive the round trip.
    let first: Vec<f64> = csv_rows(&traj)[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[1], 0.4);

    let wrong_dim =
        lsi(&["predict", "--model", s(&model), "--q0", "0.4,0.1", "--qdot0", "0,0", "--steps", "2", "--out", s(&traj)]);
    assert_eq!(code(&wrong_dim), 2);

    let energy = path(&dir, "energy.csv");
    let out = lsi(&["analyze", "energy", "--trajectory", s(&traj), "--field", "ref:pendulum", "--out", s(&energy)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(csv_rows(&energy).len(), 21);
    assert!(stdout(&out).contains("band"), "{}", stdout(&out));
    let out = lsi(&[
        "analyze",
        "energy",
        "--trajectory",
        s(&traj),
        "--field",
        s(&model),
        "--from-momenta",
        "--out",
        s(&energy),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = lsi(&["analyze", "divergence", "--trajectory", s(&traj)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "none");
    let out = lsi(&["analyze", "divergence", "--trajectory", s(&traj), "--bound", "0.1"]);
    assert_eq!(stdout(&out).trim().parse::<f64>().unwrap(), 0.0);

    let out = lsi(&["analyze", "nu", "--a", s(&model), "--b", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = stdout(&out).lines().next().unwrap().to_owned();
    assert_eq!(first.parse::<f64>().unwrap(), 0.0);
    let out = lsi(&["analyze", "nu", "--a", "ref:pendulum", "--b", s(&model), "--grid", "-1:1:5,-1:1:5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let nu: f64 = stdout(&out).lines().next().unwrap().parse().unwrap();
    assert!((0.0..1.0).contains(&nu));
    let out = lsi(&["analyze", "nu", "--a", "ref:pendulum", "--b", "ref:henon-heiles"]);
    assert_eq!(code(&out), 2);
    let out = lsi(&["analyze", "nu", "--a", "ref:pendulum", "--b", "ref:pendulum", "--order-a", "2"]);
    assert_eq!(code(&out), 2);

    let contour = path(&dir, "contour.csv");
    let out = lsi(&["analyze", "contour", "--field", s(&model), "--grid", "-1:1:4,-1:1:3", "--out", s(&contour)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // One row per y value, x values across.
    let rows = csv_rows(&contour);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
}

#[test]
fn failed_step_leaves_partial_output() {
    let dir = TempDir::new().unwrap();
    let model = pendulum_model(&dir);
    let config = path(&dir, "newton.json");
    std::fs::write(&config, r#"{"newton": {"tol": 0, "max_iter": 1, "stall_tol": 0}}"#).unwrap();
    let traj = path(&dir, "pred.csv");
    let out = lsi(&[
        "--config",
        s(&config),
        "predict",
        "--model",
        s(&model),
        "--q0",
        "0.4",
        "--qdot0",
        "0",
        "--steps",
        "10",
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("1 snapshots written"), "{}", stderr(&out));
    assert_eq!(csv_rows(&traj).len(), 1);
}

#[test]
fn gpflow_models_roll_out_without_correction() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.json");
    let model = path(&dir, "flow.json");
    assert_eq!(code(&lsi(&["gen-data", "--n-traj", "10", "--traj-len", "4", "--out", s(&data)])), 0);
    let out = lsi(&["train", "--method", "gpflow", "--data", s(&data), "--out", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let traj = path(&dir, "p.csv");
    let out =
        lsi(&["predict", "--model", s(&model), "--q0", "0.2", "--qdot0", "0.1", "--steps", "5", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(csv_rows(&traj).len(), 6);
    let out = lsi(&[
        "predict",
        "--model",
        s(&model),
        "--q0",
        "0.2",
        "--qdot0",
        "0.1",
        "--steps",
        "5",
        "--bea-order",
        "2",
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&out), 2);
    let out = lsi(&["analyze", "nu", "--a", s(&model), "--b", "ref:pendulum"]);
    assert_eq!(code(&out), 2);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn small_reproduction_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out_dir = path(&dir, name);
        let out =
            lsi(&["reproduce", "pendulum", "--out", s(&out_dir), "--n-traj", "15", "--traj-len", "4", "--steps", "30"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        (out_dir, stdout(&out))
    };
    let (a, table_a) = run("a");
    let (b, table_b) = run("b");
    assert_eq!(table_a, table_b);
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.iter().any(|(n, _)| n == "summary.json"));
    assert_eq!(fa.len(), fb.len());
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
}
