use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::model::Dataset;
use crate::robust::{mad, mean, median, sd};

use super::Truth;

/// Location and spread of a metric across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub mad: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary {
                mean: f64::NAN,
                sd: f64::NAN,
                median: f64::NAN,
                mad: f64::NAN,
            };
        }
        Summary {
            mean: mean(values),
            sd: if values.len() > 1 { sd(values) } else { 0.0 },
            median: median(values),
            mad: mad(values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub rmspe: f64,
    pub fpr_beta: f64,
    pub fnr_beta: f64,
    pub fpr_phi: f64,
    pub fnr_phi: f64,
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Metrics of one fit: prediction error on clean test data and selection
/// error rates. Coefficient rates run over all `p` coordinates, intercept included.
pub fn replication_metrics(beta: &[f64], phi: &[f64], truth: &Truth, test: &Dataset) -> ReplicationMetrics {
    let sse: f64 = (0..test.n())
        .map(|i| {
            let r = test.y()[i] - dot(test.x().row(i), beta);
            r * r
        })
        .sum();
    let rmspe = (sse / test.n() as f64).sqrt();

    let zero_true = truth.beta.iter().filter(|b| **b == 0.0).count();
    let fp_b = beta.iter().zip(&truth.beta).filter(|(h, t)| **h != 0.0 && **t == 0.0).count();
    let fn_b = beta.iter().zip(&truth.beta).filter(|(h, t)| **h == 0.0 && **t != 0.0).count();

    let n = phi.len();
    let mut is_out = vec![false; n];
    for &i in &truth.outliers {
        is_out[i] = true;
    }
    let fp_p = (0..n).filter(|&i| phi[i] != 0.0 && !is_out[i]).count();
    let fn_p = (0..n).filter(|&i| phi[i] == 0.0 && is_out[i]).count();

    ReplicationMetrics {
        rmspe,
        fpr_beta: rate(fp_b, zero_true),
        fnr_beta: rate(fn_b, truth.beta.len() - zero_true),
        fpr_phi: rate(fp_p, n - truth.outliers.len()),
        fnr_phi: rate(fn_p, truth.outliers.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replications: usize,
    pub rmspe: Summary,
    /// Coordinate-averaged variance of `β̂` across replications (divisor `q`).
    pub var_beta: f64,
    /// Coordinate-averaged squared bias of `β̂`.
    pub bias2_beta: f64,
    /// Coordinate-averaged mean squared error; equals `var_beta + bias2_beta`.
    pub mse_beta: f64,
    pub fpr_beta: Summary,
    pub fnr_beta: Summary,
    pub fpr_phi: Summary,
    pub fnr_phi: Summary,
    pub wall_time: Option<Summary>,
}

/// Aggregates `(β̂, φ̂)` fits, one per replication.
pub fn compute_metrics(
    fits: &[(Vec<f64>, Vec<f64>)],
    truths: &[Truth],
    tests: &[Dataset],
    wall_times: Option<&[f64]>,
) -> MetricsReport {
    let per: Vec<ReplicationMetrics> = fits
        .iter()
        .zip(truths)
        .zip(tests)
        .map(|(((b, f), t), d)| replication_metrics(b, f, t, d))
        .collect();
    let q = fits.len();
    let (mut var, mut bias2, mut mse) = (0.0, 0.0, 0.0);
    if q > 0 {
        let p = fits[0].0.len();
        for j in 0..p {
            let vals: Vec<f64> = fits.iter().map(|(b, _)| b[j]).collect();
            let truth_j = truths[0].beta[j];
            let m = mean(&vals);
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / q as f64;
            var += v;
            bias2 += (m - truth_j) * (m - truth_j);
            mse += vals.iter().map(|x| (x - truth_j) * (x - truth_j)).sum::<f64>() / q as f64;
        }
        var /= p as f64;
        bias2 /= p as f64;
        mse /= p as f64;
    }
    let col = |f: fn(&ReplicationMetrics) -> f64| -> Summary { Summary::of(&per.iter().map(f).collect::<Vec<_>>()) };
    MetricsReport {
        replications: q,
        rmspe: col(|m| m.rmspe),
        var_beta: var,
        bias2_beta: bias2,
        mse_beta: mse,
        fpr_beta: col(|m| m.fpr_beta),
        fnr_beta: col(|m| m.fnr_beta),
        fpr_phi: col(|m| m.fpr_phi),
        fnr_phi: col(|m| m.fnr_phi),
        wall_time: wall_times.map(Summary::of),
    }
}
