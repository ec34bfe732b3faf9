//! Synthetic data with mean-shift contamination, evaluation metrics and an
//! experiment runner.
//!
//! A scenario draws an intercept column plus `p − 1` Gaussian predictors, a
//! coefficient vector with `p0` entries equal to `beta_value` (intercept
//! included), and Gaussian errors whose variance fixes the signal-to-noise
//! ratio. The first `n0` training cases then receive a shift `shift_eps` on
//! the error and `shift_x` on each active predictor. Test data follow the same
//! scheme without contamination.

mod experiment;
mod metrics;
mod spe;

pub use experiment::{format_g, run_experiment, BenchMethod, ExperimentConfig, ExperimentReport, ReplicationRow};
pub use metrics::{compute_metrics, replication_metrics, MetricsReport, ReplicationMetrics, Summary};
pub use spe::{scaled_prediction_error, SpeResult};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;
use crate::rng::{keyed_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Covariance {
    Identity,
    /// `Σ_jk = ρ^|j−k|`.
    Ar { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Columns including the intercept.
    pub p: usize,
    /// Nonzero coefficients including the intercept.
    pub p0: usize,
    pub beta_value: f64,
    pub covariance: Covariance,
    pub snr: f64,
    pub contamination_rate: f64,
    pub shift_eps: f64,
    pub shift_x: f64,
    pub seed: u64,
    pub replications: usize,
    /// Test cases per replication; 0 means `n`.
    pub n_test: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 100,
            p: 50,
            p0: 5,
            beta_value: 2.0,
            covariance: Covariance::Identity,
            snr: 5.0,
            contamination_rate: 0.1,
            shift_eps: -10.0,
            shift_x: 10.0,
            seed: 1,
            replications: 20,
            n_test: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if self.p < 1 {
            return Err(Error::config("p", "must be at least 1"));
        }
        if self.p0 < 1 || self.p0 > self.p {
            return Err(Error::config("p0", format!("must lie in 1..={}", self.p)));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(Error::config("snr", "must be positive and finite"));
        }
        if !(0.0..0.5).contains(&self.contamination_rate) {
            return Err(Error::config("contamination_rate", "must lie in [0, 0.5)"));
        }
        if let Covariance::Ar { rho } = self.covariance {
            if !(rho.abs() < 1.0) {
                return Err(Error::config("covariance.rho", "must satisfy |rho| < 1"));
            }
        }
        if !self.beta_value.is_finite() || !self.shift_eps.is_finite() || !self.shift_x.is_finite() {
            return Err(Error::config("beta_value", "coefficients and shifts must be finite"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok(())
    }

    pub fn n_outliers(&self) -> usize {
        (self.contamination_rate * self.n as f64).round() as usize
    }

    pub fn test_size(&self) -> usize {
        if self.n_test == 0 {
            self.n
        } else {
            self.n_test
        }
    }

    /// True coefficient vector.
    pub fn beta(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.p];
        b[..self.p0].iter_mut().for_each(|v| *v = self.beta_value);
        b
    }

    /// `var(Xβ) = β_{−0}ᵀ Σ β_{−0}`.
    pub fn signal_variance(&self) -> f64 {
        let b = &self.beta()[1..];
        let mut s = 0.0;
        for (j, bj) in b.iter().enumerate() {
            for (k, bk) in b.iter().enumerate() {
                let c = match self.covariance {
                    Covariance::Identity => f64::from(u8::from(j == k)),
                    Covariance::Ar { rho } => rho.powi((j as i32 - k as i32).abs()),
                };
                s += bj * c * bk;
            }
        }
        s
    }

    pub fn noise_sd(&self) -> f64 {
        (self.signal_variance() / self.snr).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta: Vec<f64>,
    /// Contaminated training cases.
    pub outliers: Vec<usize>,
    pub noise_sd: f64,
}

impl Truth {
    /// Active non-intercept features.
    pub fn features(&self) -> Vec<usize> {
        (1..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Truth,
}

fn draw_rows(cfg: &ScenarioConfig, rows: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let d = cfg.p - 1;
    (0..rows)
        .map(|_| {
            let mut row = Vec::with_capacity(cfg.p);
            row.push(1.0);
            let mut prev = 0.0;
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let v = match cfg.covariance {
                    Covariance::Identity => z,
                    Covariance::Ar { rho } => {
                        if j == 0 {
                            z
                        } else {
                            rho * prev + (1.0 - rho * rho).sqrt() * z
                        }
                    }
                };
                prev = v;
                row.push(v);
            }
            row
        })
        .collect()
}

/// Draws replication `replication` of `cfg`; identical inputs give identical data.
pub fn generate_scenario(cfg: &ScenarioConfig, replication: u64) -> Result<Scenario> {
    cfg.validate()?;
    let beta = cfg.beta();
    let sd = cfg.noise_sd();
    let n0 = cfg.n_outliers();
    let rep = replication;

    let mut rx = keyed_rng(cfg.seed, rep, streams::DESIGN);
    let mut re = keyed_rng(cfg.seed, rep, streams::NOISE);
    let mut rows = draw_rows(cfg, cfg.n, &mut rx);
    let mut y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let e: f64 = re.sample(StandardNormal);
            crate::linalg::dot(r, &beta) + sd * e
        })
        .collect();
    // Bad leverage: the response is generated from the clean design, then
    // both the error and the active predictors are shifted.
    for i in 0..n0 {
        y[i] += cfg.shift_eps;
        for row_j in rows[i].iter_mut().take(cfg.p0).skip(1) {
            *row_j += cfg.shift_x;
        }
    }
    let train = Dataset::new(y, Matrix::from_rows(&rows), true)?;

    let mut tx = keyed_rng(cfg.seed, rep, streams::TEST_DESIGN);
    let mut te = keyed_rng(cfg.seed, rep, streams::TEST_NOISE);
    let trows = draw_rows(cfg, cfg.test_size(), &mut tx);
    let ty: Vec<f64> = trows
        .iter()
        .map(|r| {
            let e: f64 = te.sample(StandardNormal);
            crate::linalg::dot(r, &beta) + sd * e
        })
        .collect();
    let test = Dataset::new(ty, Matrix::from_rows(&trows), true)?;

    Ok(Scenario {
        train,
        test,
        truth: Truth {
            beta,
            outliers: (0..n0).collect(),
            noise_sd: sd,
        },
    })
}
