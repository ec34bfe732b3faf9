//! Regression data, problem instances, solutions and the basic loss functions.
//!
//! The mixed-integer program solved by this crate is
//!
//! ```text
//! minimise   (1/n) ‖y − Xβ − φ‖²
//! subject to −Mβ_j zβ_j ≤ β_j ≤ Mβ_j zβ_j      (feature big-M, optional)
//!            −Mφ_i zφ_i ≤ φ_i ≤ Mφ_i zφ_i      (case big-M, optional)
//!            Σ_j β_j² ≤ λ                      (ridge radius, +∞ = absent)
//!            Σ_j zβ_j ≤ k_p,  Σ_i zφ_i ≤ k_n,  z ∈ {0,1}
//! ```
//!
//! A nonzero `φ_i` removes case `i` from the fit (a mean shift), so for a fixed
//! `β` the best `φ` simply absorbs the `k_n` largest residuals and the objective
//! collapses to a trimmed sum of squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::robust::{mad, median, top_k_abs};

/// Per-column robust centring and scaling applied to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Median subtracted from the response (0 when the model has no intercept).
    pub y_center: f64,
    /// Median subtracted from each column (0 for the intercept column).
    pub x_center: Vec<f64>,
    /// Raw MAD each column was divided by (1 for the intercept column).
    pub x_scale: Vec<f64>,
}

impl Standardization {
    /// Maps coefficients fitted on the standardized data back to the original scale.
    /// Mean-shift parameters need no transformation because `y` is only centred.
    pub fn coefficients_to_original(&self, beta: &[f64], intercept: bool) -> Vec<f64> {
        let mut out: Vec<f64> = beta
            .iter()
            .zip(&self.x_scale)
            .map(|(b, s)| b / s)
            .collect();
        if intercept {
            let shift: f64 = beta
                .iter()
                .zip(&self.x_center)
                .zip(&self.x_scale)
                .skip(1)
                .map(|((b, c), s)| b * c / s)
                .sum();
            out[0] = beta[0] + self.y_center - shift;
        }
        out
    }

    fn compose(&self, inner: &Standardization) -> Standardization {
        // x'' = ((x − c1)/s1 − c2)/s2 = (x − (c1 + s1 c2)) / (s1 s2)
        Standardization {
            y_center: self.y_center + inner.y_center,
            x_center: self
                .x_center
                .iter()
                .zip(&self.x_scale)
                .zip(&inner.x_center)
                .map(|((c1, s1), c2)| c1 + s1 * c2)
                .collect(),
            x_scale: self
                .x_scale
                .iter()
                .zip(&inner.x_scale)
                .map(|(s1, s2)| s1 * s2)
                .collect(),
        }
    }
}

/// Response vector and design matrix. When `intercept` is set, column 0 of the
/// design is the all-ones intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x: Matrix,
    intercept: bool,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix, intercept: bool) -> Result<Self> {
        if y.is_empty() || x.cols() == 0 {
            return Err(Error::DimensionMismatch(
                "dataset needs at least one case and one column".into(),
            ));
        }
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries but design has {} rows",
                y.len(),
                x.rows()
            )));
        }
        if y.iter().chain(x.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite value in data".into()));
        }
        if intercept && (0..x.rows()).any(|i| x.get(i, 0) != 1.0) {
            return Err(Error::InvalidProblem(
                "intercept flag set but column 0 is not all ones".into(),
            ));
        }
        Ok(Dataset {
            y,
            x,
            intercept,
            standardization: None,
        })
    }

    /// Prepends an intercept column to a feature matrix.
    pub fn with_intercept(y: Vec<f64>, features: &Matrix) -> Result<Self> {
        let n = features.rows();
        let p = features.cols() + 1;
        let mut x = Matrix::zeros(n, p);
        for i in 0..n {
            let row = x.row_mut(i);
            row[0] = 1.0;
            row[1..].copy_from_slice(features.row(i));
        }
        Dataset::new(y, x, true)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of design columns, intercept included.
    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn intercept(&self) -> bool {
        self.intercept
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Columns eligible for selection (everything but the intercept).
    pub fn selectable(&self) -> std::ops::Range<usize> {
        usize::from(self.intercept)..self.p()
    }

    /// Number of selectable columns.
    pub fn n_selectable(&self) -> usize {
        self.p() - usize::from(self.intercept)
    }

    /// Dataset restricted to the given cases, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows),
            intercept: self.intercept,
            standardization: self.standardization.clone(),
        }
    }

    /// Dataset restricted to the given columns. Keeps the intercept flag only
    /// when column 0 is retained in first position.
    pub fn subset_cols(&self, cols: &[usize]) -> Dataset {
        let intercept = self.intercept && cols.first() == Some(&0);
        Dataset {
            y: self.y.clone(),
            x: self.x.select_cols(cols),
            intercept,
            standardization: None,
        }
    }

    /// `y − Xβ`.
    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.y[i] - dot(self.x.row(i), beta))
            .collect()
    }

    /// Robust standardization: centre `y` and each non-intercept column at
    /// its median and scale each non-intercept column to unit raw MAD.
    ///
    /// Without an intercept only the column scaling is applied, since
    /// centring would change the model being fitted.
    pub fn standardize_robust(&self) -> Result<Dataset> {
        let p = self.p();
        let mut x_center = vec![0.0; p];
        let mut x_scale = vec![1.0; p];
        for j in self.selectable() {
            let col = self.x.column(j);
            let s = mad(&col);
            if !(s > 0.0) {
                return Err(Error::ZeroMadColumn(j));
            }
            if self.intercept {
                x_center[j] = median(&col);
            }
            x_scale[j] = s;
        }
        let y_center = if self.intercept { median(&self.y) } else { 0.0 };

        let mut x = self.x.clone();
        for i in 0..self.n() {
            let row = x.row_mut(i);
            for j in self.selectable() {
                row[j] = (row[j] - x_center[j]) / x_scale[j];
            }
        }
        let y = self.y.iter().map(|v| v - y_center).collect();
        let step = Standardization {
            y_center,
            x_center,
            x_scale,
        };
        let record = match &self.standardization {
            Some(prev) => prev.compose(&step),
            None => step,
        };
        Ok(Dataset {
            y,
            x,
            intercept: self.intercept,
            standardization: Some(record),
        })
    }
}

/// A fully specified instance of the sparse robust regression program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsodProblem {
    pub data: Dataset,
    /// Budget of active non-intercept features.
    pub k_p: usize,
    /// Budget of trimmed (mean-shifted) cases.
    pub k_n: usize,
    /// Ridge radius on `Σ β_j²` over non-intercept coefficients; `+∞` disables it.
    pub lambda: f64,
    /// Feature big-M bounds, one per design column (the intercept slot is unused).
    pub bigm_beta: Option<Vec<f64>>,
    /// Case big-M bounds, one per case.
    pub bigm_phi: Option<Vec<f64>>,
}

impl SfsodProblem {
    pub fn new(data: Dataset, k_p: usize, k_n: usize) -> Result<Self> {
        let pb = SfsodProblem {
            data,
            k_p,
            k_n,
            lambda: f64::INFINITY,
            bigm_beta: None,
            bigm_phi: None,
        };
        pb.validate()?;
        Ok(pb)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_bigm(mut self, beta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        self.bigm_beta = Some(beta);
        self.bigm_phi = Some(phi);
        self.validate()?;
        Ok(self)
    }

    pub fn without_bigm(mut self) -> Self {
        self.bigm_beta = None;
        self.bigm_phi = None;
        self
    }

    /// Same data with different budgets.
    pub fn with_budgets(&self, k_p: usize, k_n: usize) -> Result<Self> {
        let mut pb = self.clone();
        pb.k_p = k_p;
        pb.k_n = k_n;
        pb.validate()?;
        Ok(pb)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let sel = self.data.n_selectable();
        if self.k_p > sel {
            return Err(Error::InvalidProblem(format!(
                "k_p = {} exceeds the {} selectable features",
                self.k_p, sel
            )));
        }
        if self.k_n + self.k_p + 1 > n {
            return Err(Error::InvalidProblem(format!(
                "k_n = {} too large: need k_n <= n - k_p - 1 = {}",
                self.k_n,
                n as isize - self.k_p as isize - 1
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Infeasible(format!(
                "ridge radius must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let Some(m) = &self.bigm_beta {
            check_bounds(m, self.p(), "feature")?;
        }
        if let Some(m) = &self.bigm_phi {
            check_bounds(m, n, "case")?;
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.n()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.data.p()
    }

    #[inline]
    pub fn intercept(&self) -> bool {
        self.data.intercept()
    }

    pub fn has_bigm(&self) -> bool {
        self.bigm_beta.is_some() && self.bigm_phi.is_some()
    }

    pub fn ridge_active(&self) -> bool {
        self.lambda.is_finite()
    }
}

fn check_bounds(m: &[f64], len: usize, what: &str) -> Result<()> {
    if m.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "{what} big-M vector has length {} (expected {len})",
            m.len()
        )));
    }
    if m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidProblem(format!(
            "{what} big-M entries must be positive and finite"
        )));
    }
    Ok(())
}

/// How a solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Gap closed to within the configured tolerance.
    Optimal,
    TimeLimit,
    NodeLimit,
    /// Produced by a heuristic; no bound was computed.
    Heuristic,
}

/// A feasible point with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Support indicators; the intercept slot is always `false` (it has no indicator).
    pub z_beta: Vec<bool>,
    pub z_phi: Vec<bool>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes_explored: u64,
    /// Seconds.
    pub wall_time: f64,
    pub status: SolveStatus,
}

impl Solution {
    /// Builds a heuristic (uncertified) solution, deriving indicators from the
    /// nonzero pattern and recomputing the objective.
    pub fn from_point(problem: &SfsodProblem, beta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let obj = objective(problem, &beta, &phi)?;
        let z_beta = beta
            .iter()
            .enumerate()
            .map(|(j, b)| !(problem.intercept() && j == 0) && *b != 0.0)
            .collect();
        let z_phi = phi.iter().map(|v| *v != 0.0).collect();
        Ok(Solution {
            beta,
            phi,
            z_beta,
            z_phi,
            objective: obj,
            lower_bound: 0.0,
            gap: gap(obj, 0.0),
            nodes_explored: 0,
            wall_time: 0.0,
            status: SolveStatus::Heuristic,
        })
    }

    /// Active non-intercept features.
    pub fn feature_support(&self) -> Vec<usize> {
        (0..self.z_beta.len()).filter(|&j| self.z_beta[j]).collect()
    }

    /// Trimmed cases.
    pub fn case_support(&self) -> Vec<usize> {
        (0..self.z_phi.len()).filter(|&i| self.z_phi[i]).collect()
    }
}

/// Relative optimality gap `(ub − lb) / max(ub, ε)`, clamped at zero.
pub fn gap(upper: f64, lower: f64) -> f64 {
    const EPS: f64 = 1e-12;
    ((upper - lower) / upper.abs().max(EPS)).max(0.0)
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `(1/n) Σ_i (y_i − x_iᵀβ − φ_i)²`, summed in case order.
pub fn objective(problem: &SfsodProblem, beta: &[f64], phi: &[f64]) -> Result<f64> {
    check_len("beta", beta.len(), problem.p())?;
    check_len("phi", phi.len(), problem.n())?;
    let data = &problem.data;
    let mut s = 0.0;
    for i in 0..data.n() {
        let e = data.y[i] - dot(data.x.row(i), beta);
        let r = e - phi[i];
        s += r * r;
    }
    Ok(s / data.n() as f64)
}

/// The `φ` minimising the objective for fixed `β`: it equals the residual on
/// the `k_n` largest absolute residuals (ties to the smaller index) and 0 elsewhere.
pub fn optimal_phi_given_beta(problem: &SfsodProblem, beta: &[f64]) -> Result<Vec<f64>> {
    check_len("beta", beta.len(), problem.p())?;
    let e = problem.data.residuals(beta);
    let mut phi = vec![0.0; e.len()];
    for i in top_k_abs(&e, problem.k_n) {
        phi[i] = e[i];
    }
    Ok(phi)
}

/// `(1/n)` times the sum of the `n − k_n` smallest squared residuals.
///
/// The retained squares are accumulated in case order, which makes the value
/// bit-identical to `objective(β, optimal_phi_given_beta(β))`.
pub fn trimmed_loss(problem: &SfsodProblem, beta: &[f64]) -> Result<f64> {
    check_len("beta", beta.len(), problem.p())?;
    let e = problem.data.residuals(beta);
    let mut trimmed = vec![false; e.len()];
    for i in top_k_abs(&e, problem.k_n) {
        trimmed[i] = true;
    }
    let mut s = 0.0;
    for (i, ei) in e.iter().enumerate() {
        // Trimmed cases contribute an exact zero in `objective`.
        let r = if trimmed[i] { 0.0 } else { *ei };
        s += r * r;
    }
    Ok(s / e.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SfsodProblem {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.5, -1.0],
            vec![1.0, 1.5, 2.0],
            vec![1.0, -0.3, 0.1],
            vec![1.0, 2.2, -0.7],
        ]);
        let data = Dataset::new(vec![1.0, 2.0, -1.0, 0.5], x, true).unwrap();
        SfsodProblem::new(data, 2, 1).unwrap()
    }

    #[test]
    fn standardize_hand_example() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
            vec![1.0, 4.0],
            vec![1.0, 100.0],
        ]);
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], x, true).unwrap();
        let s = d.standardize_robust().unwrap();
        assert_eq!(s.x().column(1), vec![-2.0, -1.0, 0.0, 1.0, 97.0]);
        assert_eq!(s.x().column(0), vec![1.0; 5]);
        assert_eq!(median(s.y()), 0.0);
    }

    #[test]
    fn standardize_constant_column_errors() {
        let x = Matrix::from_rows(&[
            vec![1.0, 5.0],
            vec![1.0, 5.0],
            vec![1.0, 5.0],
            vec![1.0, 5.0],
        ]);
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], x, true).unwrap();
        assert_eq!(d.standardize_robust().unwrap_err(), Error::ZeroMadColumn(1));
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = Matrix::from_rows(&[
            vec![1.0, 3.0, -2.0],
            vec![1.0, 7.0, 0.5],
            vec![1.0, 1.0, 4.0],
            vec![1.0, 2.0, 1.0],
            vec![1.0, 9.0, -1.0],
        ]);
        let d = Dataset::new(vec![1.0, 4.0, 2.0, 8.0, 3.0], x, true).unwrap();
        let once = d.standardize_robust().unwrap();
        let twice = once.standardize_robust().unwrap();
        for (a, b) in once.x().as_slice().iter().zip(twice.x().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in once.y().iter().zip(twice.y()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_perfect_fit_and_zero_point() {
        let pb = toy();
        let beta = vec![0.2, -0.4, 0.9];
        let phi = pb.data.residuals(&beta);
        assert_eq!(objective(&pb, &beta, &phi).unwrap(), 0.0);
        let zero_b = vec![0.0; 3];
        let zero_p = vec![0.0; 4];
        let ynorm: f64 = pb.data.y().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert_eq!(objective(&pb, &zero_b, &zero_p).unwrap(), ynorm);
        assert!(matches!(
            objective(&pb, &[0.0; 2], &zero_p),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn trimming_hand_example() {
        // Residuals (3, −7, 1, 5) with β = 0 and y = residuals.
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]);
        let data = Dataset::new(vec![3.0, -7.0, 1.0, 5.0], x, false).unwrap();
        let mut pb = SfsodProblem::new(data, 0, 2).unwrap();
        let phi = optimal_phi_given_beta(&pb, &[0.0]).unwrap();
        assert_eq!(phi, vec![0.0, -7.0, 0.0, 5.0]);
        assert_eq!(trimmed_loss(&pb, &[0.0]).unwrap(), 2.5);
        pb.k_n = 0;
        assert_eq!(optimal_phi_given_beta(&pb, &[0.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(
            trimmed_loss(&pb, &[0.0]).unwrap(),
            objective(&pb, &[0.0], &[0.0; 4]).unwrap()
        );
    }

    #[test]
    fn problem_validation() {
        let pb = toy();
        assert!(pb.with_budgets(3, 0).is_err());
        assert!(pb.with_budgets(2, 2).is_err());
        assert!(pb.with_budgets(2, 1).is_ok());
        assert!(matches!(
            pb.clone().with_lambda(-1.0),
            Err(Error::Infeasible(_))
        ));
        assert!(pb
            .clone()
            .with_bigm(vec![1.0, 0.0, 1.0], vec![1.0; 4])
            .is_err());
        assert!(matches!(
            pb.with_bigm(vec![1.0; 2], vec![1.0; 4]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn back_transform_reproduces_fitted_values() {
        let x = Matrix::from_rows(&[
            vec![1.0, 3.0, -2.0],
            vec![1.0, 7.0, 0.5],
            vec![1.0, 1.0, 4.0],
            vec![1.0, 2.0, 1.0],
            vec![1.0, 9.0, -1.0],
        ]);
        let d = Dataset::new(vec![1.0, 4.0, 2.0, 8.0, 3.0], x, true).unwrap();
        let s = d.standardize_robust().unwrap();
        let b_std = vec![0.3, -1.2, 0.8];
        let b = s
            .standardization()
            .unwrap()
            .coefficients_to_original(&b_std, true);
        for i in 0..5 {
            let fit_std = dot(s.x().row(i), &b_std) + s.standardization().unwrap().y_center;
            let fit_raw = dot(d.x().row(i), &b);
            assert!((fit_std - fit_raw).abs() < 1e-12);
        }
    }
}
