//! The robust oracle estimator (least squares with known supports) and
//! deletion residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, gram, row_dot, xty, Cholesky, RANK_TOL};
use crate::model::Dataset;

/// Least-squares fit on the augmented restricted design `[X_S, I_M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFit {
    /// Coefficients on the feature columns (intercept first when present),
    /// followed by one shift per trimmed case.
    pub theta: Vec<f64>,
    /// Design columns of `theta`'s first block, intercept included.
    pub columns: Vec<usize>,
    /// Trimmed cases, in the order of `theta`'s second block.
    pub cases: Vec<usize>,
    /// `y − X_S β_S − φ` over all cases.
    pub residuals: Vec<f64>,
}

impl OracleFit {
    /// Coefficients scattered into a length-`p` vector.
    pub fn beta(&self, p: usize) -> Vec<f64> {
        let mut b = vec![0.0; p];
        for (&c, v) in self.columns.iter().zip(&self.theta) {
            b[c] = *v;
        }
        b
    }

    /// Shifts scattered into a length-`n` vector.
    pub fn phi(&self, n: usize) -> Vec<f64> {
        let mut f = vec![0.0; n];
        let s = self.columns.len();
        for (k, &i) in self.cases.iter().enumerate() {
            f[i] = self.theta[s + k];
        }
        f
    }
}

/// Fits `θ = (AᵀA)⁻¹Aᵀy` with `A = [X_{S_β}, I_{S_φ}]`, where `S_β` is
/// `features` plus the intercept when the dataset has one.
pub fn robust_oracle_fit(data: &Dataset, features: &[usize], cases: &[usize]) -> Result<OracleFit> {
    let n = data.n();
    let columns = columns_for(data, features);
    let mut cases = cases.to_vec();
    cases.sort_unstable();
    cases.dedup();
    if columns.iter().any(|&c| c >= data.p()) || cases.iter().any(|&i| i >= n) {
        return Err(Error::DimensionMismatch("support index out of range".into()));
    }
    let s = columns.len();
    let m = cases.len();
    if s + m >= n {
        return Err(Error::InvalidProblem(format!(
            "|S_beta| + |S_phi| = {} must be below n = {n}",
            s + m
        )));
    }
    // Normal equations of the augmented design, assembled blockwise:
    // [XᵀX   X_Mᵀ]
    // [X_M   I   ]
    let dim = s + m;
    let all: Vec<usize> = (0..n).collect();
    let gxx = gram(data.x(), &all, &columns);
    let mut a = vec![0.0; dim * dim];
    for r in 0..s {
        a[r * dim..r * dim + s].copy_from_slice(&gxx[r * s..(r + 1) * s]);
    }
    for (k, &i) in cases.iter().enumerate() {
        let row = data.x().row(i);
        for (r, &c) in columns.iter().enumerate() {
            a[r * dim + s + k] = row[c];
            a[(s + k) * dim + r] = row[c];
        }
        a[(s + k) * dim + s + k] = 1.0;
    }
    let mut rhs = xty(data.x(), data.y(), &all, &columns);
    rhs.extend(cases.iter().map(|&i| data.y()[i]));

    let chol = Cholesky::factor(&a, dim).ok_or(Error::RankDeficient)?;
    // A rank-deficient augmented design shows up as a tiny pivot.
    let scale = (0..dim).map(|d| a[d * dim + d]).fold(0.0, f64::max);
    if chol.min_pivot() <= RANK_TOL * scale {
        return Err(Error::RankDeficient);
    }
    let theta = chol.solve(&rhs);

    let mut residuals: Vec<f64> = (0..n)
        .map(|i| data.y()[i] - row_dot(data.x().row(i), &columns, &theta[..s]))
        .collect();
    for (k, &i) in cases.iter().enumerate() {
        residuals[i] -= theta[s + k];
    }
    Ok(OracleFit {
        theta,
        columns,
        cases,
        residuals,
    })
}

/// Studentized deletion residuals relative to a fit on `subset`.
///
/// Cases in the subset get the leave-one-out statistic
/// `t_i = (y_i − x_iᵀβ̂_(i)) / (σ̂_(i) √(1 + x_iᵀ(X_(i)ᵀX_(i))⁻¹x_i))`, computed in
/// closed form from the subset fit. Cases outside the subset get their
/// prediction residual studentized against the subset fit,
/// `e_i / (σ̂ √(1 + x_iᵀ(X_SᵀX_S)⁻¹x_i))` with `σ̂² = RSS / (m − p)`.
/// Under a Gaussian null both follow Student's t (`m − p − 1` and `m − p` df).
///
/// A subset case with leverage 1 has no defined statistic and yields `NaN`.
pub fn deletion_residuals(data: &Dataset, subset: &[usize]) -> Result<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let m = subset.len();
    if m < p + 2 {
        return Err(Error::InvalidProblem(format!(
            "deletion residuals need at least p + 2 = {} fitted cases, got {m}",
            p + 2
        )));
    }
    if subset.iter().any(|&i| i >= n) {
        return Err(Error::DimensionMismatch("subset index out of range".into()));
    }
    let cols: Vec<usize> = (0..p).collect();
    let g = gram(data.x(), subset, &cols);
    let chol = Cholesky::factor(&g, p).ok_or(Error::RankDeficient)?;
    let scale = (0..p).map(|d| g[d * p + d]).fold(0.0, f64::max);
    if chol.min_pivot() <= RANK_TOL * scale {
        return Err(Error::RankDeficient);
    }
    let beta = chol.solve(&xty(data.x(), data.y(), subset, &cols));
    let resid: Vec<f64> = (0..n)
        .map(|i| data.y()[i] - dot(data.x().row(i), &beta))
        .collect();
    let rss: f64 = subset.iter().map(|&i| resid[i] * resid[i]).sum();

    let mut in_subset = vec![false; n];
    for &i in subset {
        in_subset[i] = true;
    }
    let sigma_out = (rss / (m - p) as f64).sqrt();
    let mut t = vec![0.0; n];
    for i in 0..n {
        let h = chol.quad_inv(data.x().row(i));
        let e = resid[i];
        t[i] = if in_subset[i] {
            let one_minus_h = 1.0 - h;
            if one_minus_h <= 1e-12 {
                f64::NAN
            } else {
                let rss_i = (rss - e * e / one_minus_h).max(0.0);
                let sigma_i = (rss_i / (m - p - 1) as f64).sqrt();
                studentize(e, sigma_i * one_minus_h.sqrt())
            }
        } else {
            studentize(e, sigma_out * (1.0 + h).sqrt())
        };
    }
    Ok(t)
}

fn studentize(e: f64, scale: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e / scale
    }
}

/// Deletion residuals of every case against the least-squares fit on
/// `retained` using only the design columns `cols`.
pub fn deletion_residuals_on(data: &Dataset, cols: &[usize], retained: &[usize]) -> Result<Vec<f64>> {
    let sub = Dataset::new(
        data.y().to_vec(),
        data.x().select_cols(cols),
        data.intercept() && cols.first() == Some(&0),
    )?;
    deletion_residuals(&sub, retained)
}

/// Columns used by a fit with the given non-intercept features.
pub fn columns_for(data: &Dataset, features: &[usize]) -> Vec<usize> {
    let mut c = Vec::with_capacity(features.len() + 1);
    if data.intercept() {
        c.push(0);
    }
    c.extend(features.iter().copied().filter(|&j| !(data.intercept() && j == 0)));
    c
}
