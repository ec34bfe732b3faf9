use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::model::Dataset;
use crate::robust::mad_normal;

/// Cutoff, in units of the normal-consistent test-residual MAD, above which a test case is dropped.
pub const SPE_THRESHOLD: f64 = 1.345;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeResult {
    /// Mean squared scaled test error over retained cases.
    pub spe: f64,
    /// Test cases kept (the estimated non-outlying count).
    pub retained: usize,
    /// Dropped test cases, 0-based.
    pub dropped: Vec<usize>,
    /// The training fit was perfect, so no scale was available; `spe` is then
    /// the mean absolute test residual over all cases.
    pub degenerate: bool,
}

/// Robustly scaled prediction error of a training fit on a test set.
///
/// Test residuals are divided by the root mean squared training residual;
/// cases whose scaled residual exceeds `1.345 · s_te` are dropped, with `s_te`
/// the MAD of the scaled residuals times 1.4826 (so 1.345 is in standard
/// deviation units, as for Huber's constant), and the
/// mean squared scaled residual of the rest is returned. When the MAD is 0
/// nothing is dropped.
pub fn scaled_prediction_error(beta: &[f64], phi: &[f64], train: &Dataset, test: &Dataset) -> SpeResult {
    let eps_tr: Vec<f64> = (0..train.n())
        .map(|i| train.y()[i] - dot(train.x().row(i), beta) - phi[i])
        .collect();
    let s_tr = (eps_tr.iter().map(|e| e * e).sum::<f64>() / train.n() as f64).sqrt();
    let eps_te: Vec<f64> = (0..test.n())
        .map(|i| test.y()[i] - dot(test.x().row(i), beta))
        .collect();
    if !(s_tr > 0.0) {
        let spe = eps_te.iter().map(|e| e.abs()).sum::<f64>() / test.n() as f64;
        return SpeResult {
            spe,
            retained: test.n(),
            dropped: Vec::new(),
            degenerate: true,
        };
    }
    let r: Vec<f64> = eps_te.iter().map(|e| e / s_tr).collect();
    let s_te = mad_normal(&r);
    let dropped: Vec<usize> = if s_te > 0.0 {
        (0..r.len()).filter(|&i| r[i].abs() > SPE_THRESHOLD * s_te).collect()
    } else {
        Vec::new()
    };
    let mut keep = vec![true; r.len()];
    for &i in &dropped {
        keep[i] = false;
    }
    let kept: Vec<f64> = r.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| v * v).collect();
    SpeResult {
        spe: kept.iter().sum::<f64>() / kept.len().max(1) as f64,
        retained: kept.len(),
        dropped,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn one_col(y: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::new(y, Matrix::from_rows(&vec![vec![1.0]; n]), true).unwrap()
    }

    #[test]
    fn equal_test_residuals_keep_everything() {
        let train = one_col(vec![1.0, -1.0, 1.0, -1.0]);
        let test = one_col(vec![2.0; 5]);
        let res = scaled_prediction_error(&[0.0], &[0.0; 4], &train, &test);
        assert_eq!(res.retained, 5);
        assert!((res.spe - 4.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_training_fit_is_degenerate() {
        let train = one_col(vec![0.0; 4]);
        let test = one_col(vec![1.0, -3.0]);
        let res = scaled_prediction_error(&[0.0], &[0.0; 4], &train, &test);
        assert!(res.degenerate);
        assert_eq!(res.spe, 2.0);
    }
}
