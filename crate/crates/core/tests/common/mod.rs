#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sfsod::{Dataset, Matrix, SfsodProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random design with intercept, sparse signal and a few shifted responses.
pub fn random_problem(seed: u64, n: usize, p: usize, k_p: usize, k_n: usize) -> SfsodProblem {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        for _ in 1..p {
            row.push(r.sample(StandardNormal));
        }
        rows.push(row);
    }
    let x = Matrix::from_rows(&rows);
    let mut beta = vec![0.0; p];
    beta[0] = r.random_range(-1.0..1.0);
    for b in beta.iter_mut().skip(1).take(k_p.max(1)) {
        *b = r.random_range(-3.0..3.0);
    }
    let mut y = x.mul_vec(&beta);
    for (i, yi) in y.iter_mut().enumerate() {
        let e: f64 = r.sample(StandardNormal);
        *yi += e;
        if i < k_n {
            *yi += r.random_range(5.0..15.0);
        }
    }
    SfsodProblem::new(Dataset::new(y, x, true).unwrap(), k_p, k_n).unwrap()
}

/// All `k`-subsets of `0..n` with `k ≤ max_k`, in lexicographic order per size.
pub fn subsets_up_to(items: &[usize], max_k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 1..=max_k.min(items.len()) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i]).collect());
            let mut i = k;
            while i > 0 && idx[i - 1] == items.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Minimum residual sum of squares of `y[rows]` on `X[rows, cols]` via SVD.
pub fn svd_rss(x: &Matrix, y: &[f64], rows: &[usize], cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return rows.iter().map(|&i| y[i] * y[i]).sum();
    }
    let a = DMatrix::from_fn(rows.len(), cols.len(), |r, c| x.get(rows[r], cols[c]));
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-10).unwrap();
    (b - a * coef).norm_squared()
}

/// Global optimum of the unconstrained-ridge program by enumerating supports.
pub fn enumerate_optimum(pb: &SfsodProblem) -> (f64, Vec<usize>, Vec<usize>) {
    let n = pb.n();
    let feats: Vec<usize> = pb.data.selectable().collect();
    let cases: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, vec![], vec![]);
    let fs = subsets_up_to(&feats, pb.k_p);
    for trimmed in subsets_up_to(&cases, pb.k_n) {
        let rows: Vec<usize> = (0..n).filter(|i| !trimmed.contains(i)).collect();
        for f in &fs {
            let mut cols = vec![0];
            cols.extend(f);
            let v = svd_rss(pb.data.x(), pb.data.y(), &rows, &cols) / n as f64;
            if v < best.0 {
                best = (v, f.clone(), trimmed.clone());
            }
        }
    }
    best
}
