mod common;

use nalgebra::{DMatrix, DVector};
use sfsod::{deletion_residuals, robust_oracle_fit, Dataset};

fn ls(x: &Dataset, rows: &[usize], cols: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(rows.len(), cols.len(), |r, c| x.x().get(rows[r], cols[c]));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| x.y()[i]));
    let gram_inv = (a.transpose() * &a).try_inverse().unwrap();
    (&gram_inv * a.transpose() * b, gram_inv)
}

#[test]
fn oracle_fit_matches_augmented_least_squares() {
    for seed in 0..20 {
        let pb = common::random_problem(seed, 15, 5, 2, 3);
        let data = &pb.data;
        let feats = [1, 3];
        let cases = [0, 2, 7];
        let fit = robust_oracle_fit(data, &feats, &cases).unwrap();

        let cols = [0, 1, 3];
        let n = data.n();
        let a = DMatrix::from_fn(n, cols.len() + cases.len(), |i, c| {
            if c < cols.len() {
                data.x().get(i, cols[c])
            } else {
                f64::from(u8::from(cases[c - cols.len()] == i))
            }
        });
        let y = DVector::from_column_slice(data.y());
        let theta = a.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        for (k, v) in fit.theta.iter().enumerate() {
            assert!((v - theta[k]).abs() < 1e-9, "seed {seed} coordinate {k}");
        }

        // Two-step form: least squares on the retained cases, then shifts
        // equal to the trimmed cases' prediction residuals.
        let keep: Vec<usize> = (0..n).filter(|i| !cases.contains(i)).collect();
        let (b, _) = ls(data, &keep, &cols);
        let beta = fit.beta(data.p());
        for (k, &c) in cols.iter().enumerate() {
            assert!((beta[c] - b[k]).abs() < 1e-9);
        }
        let phi = fit.phi(n);
        for &i in &cases {
            let pred: f64 = cols.iter().enumerate().map(|(k, &c)| data.x().get(i, c) * b[k]).sum();
            assert!((phi[i] - (data.y()[i] - pred)).abs() < 1e-9);
            assert!(fit.residuals[i].abs() < 1e-9);
        }
    }
}

#[test]
fn deletion_residuals_match_explicit_refits() {
    for seed in 0..10 {
        let pb = common::random_problem(100 + seed, 14, 3, 2, 2);
        let data = &pb.data;
        let n = data.n();
        let p = data.p();
        let subset: Vec<usize> = (2..n).collect();
        let cols: Vec<usize> = (0..p).collect();
        let t = deletion_residuals(data, &subset).unwrap();

        let pred = |b: &DVector<f64>, i: usize| -> f64 { (0..p).map(|c| data.x().get(i, c) * b[c]).sum() };
        let quad = |g: &DMatrix<f64>, i: usize| -> f64 {
            let x = DVector::from_iterator(p, (0..p).map(|c| data.x().get(i, c)));
            (x.transpose() * g * &x)[(0, 0)]
        };
        for i in 0..n {
            let expected = if subset.contains(&i) {
                let rows: Vec<usize> = subset.iter().copied().filter(|&k| k != i).collect();
                let (b, g) = ls(data, &rows, &cols);
                let rss: f64 = rows.iter().map(|&k| (data.y()[k] - pred(&b, k)).powi(2)).sum();
                let s = (rss / (rows.len() - p) as f64).sqrt();
                (data.y()[i] - pred(&b, i)) / (s * (1.0 + quad(&g, i)).sqrt())
            } else {
                let (b, g) = ls(data, &subset, &cols);
                let rss: f64 = subset.iter().map(|&k| (data.y()[k] - pred(&b, k)).powi(2)).sum();
                let s = (rss / (subset.len() - p) as f64).sqrt();
                (data.y()[i] - pred(&b, i)) / (s * (1.0 + quad(&g, i)).sqrt())
            };
            assert!((t[i] - expected).abs() < 1e-8 * expected.abs().max(1.0), "seed {seed} case {i}: {} vs {expected}", t[i]);
        }
    }
}

#[test]
fn planted_shifts_have_large_deletion_residuals() {
    let pb = common::random_problem(7, 30, 3, 2, 3);
    let keep: Vec<usize> = (3..30).collect();
    let t = deletion_residuals(&pb.data, &keep).unwrap();
    let min_out = t[..3].iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let max_in = t[3..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(min_out > max_in, "{min_out} vs {max_in}");
}
