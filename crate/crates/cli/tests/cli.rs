use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use sfsod::solver::certify;
use sfsod::{Dataset, Matrix, SfsodProblem, Solution};

fn sfsod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfsod"))
        .args(args)
        .env_remove("SFSOD_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Three predictors, `y = 1 + 2·x1 − x2` plus small noise, and row 4 shifted by 30.
fn toy_rows() -> Vec<[f64; 4]> {
    (0..20)
        .map(|i| {
            let t = i as f64;
            let x1 = (t * 0.7).sin() * 2.0 + t / 10.0;
            let x2 = (t * 1.3).cos() * 1.5;
            let x3 = ((t * 2.9).sin() * 3.0).round() / 2.0 + t / 40.0;
            let mut y = 1.0 + 2.0 * x1 - x2 + 0.05 * (t * 1.7).sin();
            if i == 3 {
                y += 30.0;
            }
            [x1, x2, x3, y]
        })
        .collect()
}

fn write_toy(dir: &Path) -> PathBuf {
    let mut s = String::from("x1,x2,x3,y\n");
    for r in toy_rows() {
        s.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, s).unwrap();
    path
}

fn least_squares(rows: &[[f64; 4]], keep: &[usize], cols: &[usize]) -> Vec<f64> {
    let a = DMatrix::from_fn(keep.len(), cols.len() + 1, |r, c| if c == 0 { 1.0 } else { rows[keep[r]][cols[c - 1]] });
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| rows[i][3]));
    a.svd(true, true).solve(&b, 1e-12).unwrap().iter().copied().collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn fit_trims_the_shifted_row_and_matches_clean_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let out_path = dir.path().join("fit.json");
    let out = sfsod(&["fit", data.to_str().unwrap(), "--kp", "2", "--kn", "1", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&out_path);
    assert_eq!(json["outliers"], serde_json::json!([4]));
    assert_eq!(json["selected_features"], serde_json::json!(["x1", "x2"]));
    assert_eq!(json["status"], "optimal");
    assert!(json.get("timings").is_none());

    let rows = toy_rows();
    let keep: Vec<usize> = (0..20).filter(|&i| i != 3).collect();
    let ls = least_squares(&rows, &keep, &[0, 1]);
    let beta = floats(&json["beta"]);
    for (b, want) in beta.iter().zip([ls[0], ls[1], ls[2], 0.0]) {
        assert!((b - want).abs() < 1e-6, "{beta:?} vs {ls:?}");
    }

    // Reload the data and re-certify the reported point independently.
    let x = Matrix::from_rows(&rows.iter().map(|r| vec![1.0, r[0], r[1], r[2]]).collect::<Vec<_>>());
    let y: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let problem = SfsodProblem::new(Dataset::new(y, x, true).unwrap(), 2, 1).unwrap();
    let mut sol = Solution::from_point(&problem, beta, floats(&json["phi"])).unwrap();
    sol.lower_bound = json["lower_bound"].as_f64().unwrap();
    sol.gap = json["gap"].as_f64().unwrap();
    let report = certify(&problem, &sol);
    assert!(report.all_passed(), "{:?}", report.checks);
    assert!((report.objective - json["objective"].as_f64().unwrap()).abs() < 1e-10);
}

#[test]
fn full_budget_without_trimming_is_ordinary_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let out_path = dir.path().join("fit.json");
    let out = sfsod(&["fit", data.to_str().unwrap(), "--kp", "3", "--kn", "0", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let beta = floats(&read_json(&out_path)["beta"]);
    let ls = least_squares(&toy_rows(), &(0..20).collect::<Vec<_>>(), &[0, 1, 2]);
    for (b, want) in beta.iter().zip(&ls) {
        assert!((b - want).abs() < 1e-6 * want.abs().max(1.0), "{beta:?} vs {ls:?}");
    }
}

#[test]
fn timings_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let out_path = dir.path().join("fit.json");
    let out = sfsod(&["fit", data.to_str().unwrap(), "--kp", "1", "--kn", "1", "--timings", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(read_json(&out_path)["timings"]["solve_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy(dir.path());
    let d = data.to_str().unwrap();

    assert_eq!(code(&sfsod(&["--help"])), 0);
    assert_eq!(code(&sfsod(&["fit", d, "--kp", "1"])), 1);
    assert_eq!(code(&sfsod(&["fit", d, "--kp", "1", "--kn", "1", "--response", "nope"])), 2);
    assert_eq!(code(&sfsod(&["fit", d, "--kp", "1", "--kn", "1", "--gap-tol", "-1"])), 1);
    // Budgets that leave too few cases are a usage error.
    assert_eq!(code(&sfsod(&["fit", d, "--kp", "3", "--kn", "17"])), 1);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[solver]\nnot_a_key = 1\n").unwrap();
    assert_eq!(code(&sfsod(&["fit", d, "--kp", "1", "--kn", "1", "--config", cfg.to_str().unwrap()])), 1);

    let constant = dir.path().join("constant.csv");
    std::fs::write(&constant, "a,c,y\n1,5,2\n2,5,3\n3,5,5\n4,5,4\n5,5,7\n").unwrap();
    let out = sfsod(&["fit", constant.to_str().unwrap(), "--kp", "1", "--kn", "0"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`c`"));

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "a,y\n1,2\n2,3,4\n").unwrap();
    assert_eq!(code(&sfsod(&["fit", ragged.to_str().unwrap(), "--kp", "1", "--kn", "0"])), 2);
}

#[test]
fn simulated_files_feed_fit_and_tune() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scenario.toml");
    std::fs::write(&scen, "n = 40\np = 6\np0 = 3\nreplications = 1\nseed = 5\n").unwrap();
    let sim = dir.path().join("sim");
    let out = sfsod(&["simulate", "--config", scen.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let truth = read_json(&sim.join("truth_0.json"));
    assert_eq!(truth["outliers"], serde_json::json!([1, 2, 3, 4]));

    let train = sim.join("train_0.csv");
    let fit_out = dir.path().join("fit.json");
    let out = sfsod(&["fit", train.to_str().unwrap(), "--kp", "2", "--kn", "4", "--out", fit_out.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&fit_out)["outliers"], truth["outliers"]);

    let tune_dir = dir.path().join("tune");
    let out = sfsod(&[
        "tune",
        train.to_str().unwrap(),
        "--criterion",
        "bic",
        "--kn-start",
        "8",
        "--node-limit",
        "500",
        "--out",
        tune_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_json(&tune_dir.join("tuning.json"));
    assert_eq!(t["k_n"], 4);
    assert!(tune_dir.join("bic_path.csv").exists());
    assert!(tune_dir.join("refine_trace.csv").exists());
    assert!(!tune_dir.join("cv_scores.csv").exists());
}
