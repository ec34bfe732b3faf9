use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfsod::robust::mean;
use sfsod::simulation::{
    compute_metrics, generate_scenario, scaled_prediction_error, Covariance, ScenarioConfig, Truth,
};
use sfsod::{Dataset, Matrix};

#[test]
fn noise_level_matches_snr() {
    let cfg = ScenarioConfig {
        n: 50,
        p: 11,
        n_test: 40_000,
        ..Default::default()
    };
    let s = generate_scenario(&cfg, 0).unwrap();
    let beta = &s.truth.beta;
    let signal: Vec<f64> = (0..s.test.n())
        .map(|i| s.test.x().row(i)[1..].iter().zip(&beta[1..]).map(|(a, b)| a * b).sum())
        .collect();
    let noise: Vec<f64> = (0..s.test.n())
        .map(|i| s.test.y()[i] - beta[0] - signal[i])
        .collect();
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let snr = var(&signal) / var(&noise);
    assert!((snr - 5.0).abs() < 0.25, "empirical SNR {snr}");
    assert!((var(&noise).sqrt() - s.truth.noise_sd).abs() < 0.03 * s.truth.noise_sd);
}

#[test]
fn ar_design_has_geometric_correlation() {
    let cfg = ScenarioConfig {
        n: 50,
        p: 5,
        n_test: 40_000,
        covariance: Covariance::Ar { rho: 0.6 },
        ..Default::default()
    };
    let s = generate_scenario(&cfg, 3).unwrap();
    let col = |j: usize| s.test.x().column(j);
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    assert!((corr(&col(1), &col(2)) - 0.6).abs() < 0.02);
    assert!((corr(&col(1), &col(3)) - 0.36).abs() < 0.02);
}

#[test]
fn contamination_shifts_first_rows_only() {
    let cfg = ScenarioConfig::default();
    let s = generate_scenario(&cfg, 2).unwrap();
    let beta = &s.truth.beta;
    let resid = s.train.residuals(beta);
    // Shifted predictors move the fitted value by 10·Σβ_active = 80 and the
    // response by −10.
    let out_mean = mean(&resid[..10]);
    assert!((out_mean + 90.0).abs() < 3.0, "{out_mean}");
    let in_mean = mean(&resid[10..]);
    assert!(in_mean.abs() < 1.0, "{in_mean}");
    for i in 0..10 {
        assert!(s.train.x().row(i)[1..5].iter().all(|v| *v > 5.0));
    }
    let clean = ScenarioConfig {
        contamination_rate: 0.0,
        ..Default::default()
    };
    assert!(generate_scenario(&clean, 0).unwrap().truth.outliers.is_empty());
}

#[test]
fn replications_are_order_independent() {
    let cfg = ScenarioConfig::default();
    let late = generate_scenario(&cfg, 7).unwrap();
    for r in 0..7 {
        generate_scenario(&cfg, r).unwrap();
    }
    assert_eq!(generate_scenario(&cfg, 7).unwrap(), late);
}

#[test]
fn mse_decomposes_into_variance_and_bias() {
    let truth = Truth {
        beta: vec![1.0, 0.0, -2.0],
        outliers: vec![0],
        noise_sd: 1.0,
    };
    let x = Matrix::from_rows(&[vec![1.0, 0.5, 1.0], vec![1.0, -1.0, 2.0], vec![1.0, 0.0, 0.0]]);
    let test = Dataset::new(vec![1.0, -3.0, 1.0], x, true).unwrap();
    let fits: Vec<(Vec<f64>, Vec<f64>)> = (0..7)
        .map(|k| {
            let k = k as f64;
            (vec![1.0 + 0.1 * k, 0.3 * (k - 3.0), -2.0 + 0.05 * k * k], vec![0.0; 3])
        })
        .collect();
    let rep = compute_metrics(&fits, &vec![truth; 7], &vec![test; 7], None);
    assert!((rep.mse_beta - rep.var_beta - rep.bias2_beta).abs() < 1e-12);
    assert!(rep.bias2_beta > 0.0 && rep.var_beta > 0.0);
}

#[test]
fn spe_drops_planted_test_outlier() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64 / 10.0]).collect();
    let beta = [0.5, 2.0];
    let sign = |i: usize| if i % 2 == 0 { 0.1 } else { -0.1 };
    let y_tr: Vec<f64> = rows.iter().enumerate().map(|(i, r)| beta[0] + beta[1] * r[1] + sign(i)).collect();
    let train = Dataset::new(y_tr, Matrix::from_rows(&rows), true).unwrap();
    let mut y_te: Vec<f64> = rows.iter().enumerate().map(|(i, r)| beta[0] + beta[1] * r[1] + sign(i + 1)).collect();
    y_te[11] += 25.0;
    let test = Dataset::new(y_te, Matrix::from_rows(&rows), true).unwrap();
    let res = scaled_prediction_error(&beta, &[0.0; 20], &train, &test);
    assert_eq!(res.dropped, vec![11]);
    assert_eq!(res.retained, 19);
    // Training RMS is 0.1, so every kept scaled residual is ±1.
    assert!((res.spe - 1.0).abs() < 1e-12);
}

#[test]
fn spe_drop_set_matches_threshold_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 60;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0, rng.random_range(-1.0..1.0)]).collect();
    let beta = [0.0, 1.0];
    let noise = |rng: &mut ChaCha8Rng| -> f64 { (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0 };
    let y_tr: Vec<f64> = rows.iter().map(|r| r[1] + noise(&mut rng)).collect();
    let mut y_te: Vec<f64> = rows.iter().map(|r| r[1] + noise(&mut rng)).collect();
    y_te[5] -= 40.0;
    let train = Dataset::new(y_tr.clone(), Matrix::from_rows(&rows), true).unwrap();
    let test = Dataset::new(y_te.clone(), Matrix::from_rows(&rows), true).unwrap();
    let res = scaled_prediction_error(&beta, &vec![0.0; n], &train, &test);

    let s_tr = (y_tr.iter().zip(&rows).map(|(y, r)| (y - r[1]).powi(2)).sum::<f64>() / n as f64).sqrt();
    let r: Vec<f64> = y_te.iter().zip(&rows).map(|(y, r)| (y - r[1]) / s_tr).collect();
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let med = (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    let mut dev: Vec<f64> = r.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let s_te = 1.482_602_218_505_602 * (dev[n / 2 - 1] + dev[n / 2]) / 2.0;
    let expect: Vec<usize> = (0..n).filter(|&i| r[i].abs() > 1.345 * s_te).collect();
    assert!(expect.contains(&5));
    assert_eq!(res.dropped, expect);
    assert_eq!(res.retained + res.dropped.len(), n);
    let kept: Vec<f64> = (0..n).filter(|i| !expect.contains(i)).map(|i| r[i] * r[i]).collect();
    assert!((res.spe - kept.iter().sum::<f64>() / kept.len() as f64).abs() < 1e-12);
}
