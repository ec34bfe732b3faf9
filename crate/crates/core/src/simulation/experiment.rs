use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::robust_oracle_fit;
use crate::pipeline::{fit, FitConfig, Method};

use super::metrics::{compute_metrics, replication_metrics, MetricsReport, Summary};
use super::{generate_scenario, Covariance, ScenarioConfig, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    Mip,
    DfoHeuristic,
    ConcentrationHeuristic,
    /// Least squares with the true supports.
    Oracle,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Mip => "mip",
            BenchMethod::DfoHeuristic => "dfo-heuristic",
            BenchMethod::ConcentrationHeuristic => "concentration-heuristic",
            BenchMethod::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioConfig>,
    pub methods: Vec<BenchMethod>,
    pub fit: FitConfig,
    /// Feature budget; defaults to the true number of active predictors.
    pub k_p: Option<usize>,
    /// Trimming budget; defaults to the true number of outliers.
    pub k_n: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut fit = FitConfig::default();
        fit.solver.time_limit = Some(60.0);
        ExperimentConfig {
            scenarios: vec![ScenarioConfig::default()],
            methods: vec![BenchMethod::Oracle, BenchMethod::Mip],
            fit,
            k_p: None,
            k_n: None,
        }
    }
}

/// One (cell, method, replication) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub cell: usize,
    pub method: BenchMethod,
    pub replication: usize,
    pub rmspe: f64,
    pub fpr_beta: f64,
    pub fnr_beta: f64,
    pub fpr_phi: f64,
    pub fnr_phi: f64,
    pub n_features: usize,
    pub n_trimmed: usize,
    pub objective: f64,
    pub gap: f64,
    pub status: String,
    pub error: Option<String>,
    pub beta: Vec<f64>,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub method: BenchMethod,
    pub failures: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReplicationRow>,
    pub summaries: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    sc: &ScenarioConfig,
    method: BenchMethod,
    train: &crate::model::Dataset,
    truth: &Truth,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64, String)> {
    let k_p = cfg.k_p.unwrap_or(sc.p0 - 1);
    let k_n = cfg.k_n.unwrap_or(truth.outliers.len());
    let method = match method {
        BenchMethod::Oracle => {
            let o = robust_oracle_fit(train, &truth.features(), &truth.outliers)?;
            let beta = o.beta(train.p());
            let phi = o.phi(train.n());
            let obj = o.residuals.iter().map(|r| r * r).sum::<f64>() / train.n() as f64;
            return Ok((beta, phi, obj, 0.0, "oracle".into()));
        }
        BenchMethod::Mip => Method::Mip,
        BenchMethod::DfoHeuristic => Method::DfoHeuristic,
        BenchMethod::ConcentrationHeuristic => Method::ConcentrationHeuristic,
    };
    let mut fc = cfg.fit.clone();
    fc.heuristics.seed = fc.heuristics.seed.wrapping_add(sc.seed);
    let res = fit(train, k_p, k_n, f64::INFINITY, method, &fc)?;
    let status = serde_json::to_value(res.standardized.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok((res.beta, res.phi, res.objective, res.standardized.gap, status))
}

/// Runs every method on every replication of every scenario. Failures are
/// recorded in their rows and do not stop the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.scenarios.is_empty() {
        return Err(Error::config("scenarios", "at least one scenario is required"));
    }
    if cfg.methods.is_empty() {
        return Err(Error::config("methods", "at least one method is required"));
    }
    for (c, sc) in cfg.scenarios.iter().enumerate() {
        sc.validate().map_err(|e| match e {
            Error::InvalidConfig { field, message } => Error::InvalidConfig {
                field: format!("scenarios[{c}].{field}"),
                message,
            },
            other => other,
        })?;
    }
    cfg.fit.solver.validate()?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (c, sc) in cfg.scenarios.iter().enumerate() {
        let data: Vec<_> = (0..sc.replications)
            .map(|r| generate_scenario(sc, r as u64))
            .collect::<Result<_>>()?;
        for &method in &cfg.methods {
            let mut fits = Vec::new();
            let mut truths = Vec::new();
            let mut tests = Vec::new();
            let mut failures = 0;
            for (r, s) in data.iter().enumerate() {
                let t0 = Instant::now();
                let out = run_one(cfg, sc, method, &s.train, &s.truth);
                let wall = t0.elapsed().as_secs_f64();
                let row = match out {
                    Ok((beta, phi, obj, gap, status)) => {
                        let m = replication_metrics(&beta, &phi, &s.truth, &s.test);
                        let row = ReplicationRow {
                            cell: c,
                            method,
                            replication: r,
                            rmspe: m.rmspe,
                            fpr_beta: m.fpr_beta,
                            fnr_beta: m.fnr_beta,
                            fpr_phi: m.fpr_phi,
                            fnr_phi: m.fnr_phi,
                            n_features: beta[1..].iter().filter(|b| **b != 0.0).count(),
                            n_trimmed: phi.iter().filter(|f| **f != 0.0).count(),
                            objective: obj,
                            gap,
                            status,
                            error: None,
                            beta: beta.clone(),
                            wall_time: wall,
                        };
                        fits.push((beta, phi));
                        truths.push(s.truth.clone());
                        tests.push(s.test.clone());
                        row
                    }
                    Err(e) => {
                        failures += 1;
                        ReplicationRow {
                            cell: c,
                            method,
                            replication: r,
                            rmspe: f64::NAN,
                            fpr_beta: f64::NAN,
                            fnr_beta: f64::NAN,
                            fpr_phi: f64::NAN,
                            fnr_phi: f64::NAN,
                            n_features: 0,
                            n_trimmed: 0,
                            objective: f64::NAN,
                            gap: f64::NAN,
                            status: "failed".into(),
                            error: Some(e.to_string()),
                            beta: Vec::new(),
                            wall_time: wall,
                        }
                    }
                };
                rows.push(row);
            }
            let metrics = compute_metrics(&fits, &truths, &tests, None);
            summaries.push(CellSummary {
                cell: c,
                method,
                failures,
                metrics,
            });
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        summaries,
    })
}

/// `%g`-style rendering with 6 significant digits.
pub fn format_g(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // The exponent after rounding to 6 digits decides the notation, as in C.
    let sci = format!("{v:.5e}");
    let (mant, e) = sci.split_once('e').unwrap();
    let exp: i32 = e.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    }
}

fn scenario_cols(sc: &ScenarioConfig) -> String {
    let cov = match sc.covariance {
        Covariance::Identity => "identity".to_string(),
        Covariance::Ar { rho } => format!("ar({})", format_g(rho)),
    };
    format!(
        "{},{},{},{},{},{},{},{},{}",
        sc.n,
        sc.p,
        sc.p0,
        format_g(sc.beta_value),
        cov,
        format_g(sc.snr),
        format_g(sc.contamination_rate),
        format_g(sc.shift_eps),
        format_g(sc.shift_x)
    )
}

const SCENARIO_HEADER: &str = "cell,n,p,p0,beta_value,covariance,snr,contamination_rate,shift_eps,shift_x";

impl ExperimentReport {
    /// Per-replication CSV (deterministic: no timings).
    pub fn replications_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{SCENARIO_HEADER},method,replication,rmspe,fpr_beta,fnr_beta,fpr_phi,fnr_phi,n_features,n_trimmed,objective,gap,status,error"
        );
        for r in &self.rows {
            let sc = &self.config.scenarios[r.cell];
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.cell,
                scenario_cols(sc),
                r.method.name(),
                r.replication,
                format_g(r.rmspe),
                format_g(r.fpr_beta),
                format_g(r.fnr_beta),
                format_g(r.fpr_phi),
                format_g(r.fnr_phi),
                r.n_features,
                r.n_trimmed,
                format_g(r.objective),
                format_g(r.gap),
                r.status,
                err
            );
        }
        s
    }

    /// Per-cell summary CSV.
    pub fn summary_csv(&self) -> String {
        let mut s = String::new();
        let mut header = format!("{SCENARIO_HEADER},method,replications,failures");
        for m in ["rmspe", "fpr_beta", "fnr_beta", "fpr_phi", "fnr_phi"] {
            for stat in ["mean", "sd", "median", "mad"] {
                let _ = write!(header, ",{m}_{stat}");
            }
        }
        header.push_str(",var_beta,bias2_beta,mse_beta");
        let _ = writeln!(s, "{header}");
        for c in &self.summaries {
            let sc = &self.config.scenarios[c.cell];
            let m = &c.metrics;
            let _ = write!(s, "{},{},{},{},{}", c.cell, scenario_cols(sc), c.method.name(), m.replications, c.failures);
            for sm in [m.rmspe, m.fpr_beta, m.fnr_beta, m.fpr_phi, m.fnr_phi] {
                let Summary { mean, sd, median, mad } = sm;
                let _ = write!(s, ",{},{},{},{}", format_g(mean), format_g(sd), format_g(median), format_g(mad));
            }
            let _ = writeln!(s, ",{},{},{}", format_g(m.var_beta), format_g(m.bias2_beta), format_g(m.mse_beta));
        }
        s
    }

    /// Wall-clock seconds per row; kept apart so the other reports are reproducible.
    pub fn timings_csv(&self) -> String {
        let mut s = String::from("cell,method,replication,wall_time\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.cell, r.method.name(), r.replication, format_g(r.wall_time));
        }
        s
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `replications.csv`, `summary.csv`, `report.json` and `timings.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("replications.csv"), self.replications_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("report.json"), self.json())?;
        std::fs::write(dir.join("timings.csv"), self.timings_csv())?;
        Ok(())
    }
}
