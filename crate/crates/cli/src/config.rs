use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sfsod::heuristics::HeuristicConfig;
use sfsod::pipeline::{FitConfig, Method};
use sfsod::solver::{BoundMode, SolverConfig};
use sfsod::tuning::TuningPlan;

use crate::{BoundModeArg, Failure, MethodArg, SolveArgs};

/// Per-solve time limit when none is configured.
pub const DEFAULT_TIME_LIMIT: f64 = 60.0;

/// Settings for `fit` and `tune`, read from TOML and overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub heuristics: HeuristicConfig,
    pub tuning: TuningPlan,
    /// Ridge radius on the standardized scale.
    pub lambda: Option<f64>,
    /// Use the data as given, without robust standardization.
    pub raw: bool,
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Usage)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::Usage)
}

impl RunConfig {
    /// Loads `args.config` (if any) and applies the flags on top.
    pub fn resolve(args: &SolveArgs) -> Result<RunConfig, Failure> {
        let mut c: RunConfig = match &args.config {
            Some(p) => read_toml(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = args.lambda {
            c.lambda = Some(v);
        }
        if let Some(v) = args.gap_tol {
            c.solver.gap_tol = v;
        }
        if let Some(v) = args.time_limit {
            c.solver.time_limit = Some(v);
        }
        if c.solver.time_limit.is_none() {
            c.solver.time_limit = Some(DEFAULT_TIME_LIMIT);
        }
        if let Some(v) = args.node_limit {
            c.solver.node_limit = Some(v);
        }
        if let Some(t) = args.threads {
            if t == 0 {
                return Err(Failure::Usage(anyhow::anyhow!("--threads must be at least 1")));
            }
            c.solver.thread_count = t;
            c.heuristics.threads = t;
            c.tuning.threads = t;
        }
        if let Some(s) = args.seed {
            c.solver.seed = s;
            c.heuristics.seed = s;
            c.tuning.seed = s;
        }
        if let Some(m) = args.bound_mode {
            c.solver.bound_mode = match m {
                BoundModeArg::Bigm => BoundMode::BigM,
                BoundModeArg::Sos => BoundMode::Sos,
            };
        }
        c.solver.validate()?;
        Ok(c)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(f64::INFINITY)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            solver: self.solver.clone(),
            heuristics: self.heuristics.clone(),
            raw: self.raw,
        }
    }
}

pub fn method(m: MethodArg) -> Method {
    match m {
        MethodArg::Mip => Method::Mip,
        MethodArg::Dfo => Method::DfoHeuristic,
        MethodArg::Concentration => Method::ConcentrationHeuristic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_infinity() {
        let c: RunConfig = toml::from_str(
            "lambda = inf\n[solver]\ngap_tol = 0.01\nbound_mode = \"sos\"\n[tuning]\nmethod = \"bic\"\nlambda_grid = [inf, 4.0]\n",
        )
        .unwrap();
        assert_eq!(c.solver.gap_tol, 0.01);
        assert_eq!(c.solver.bound_mode, BoundMode::Sos);
        assert_eq!(c.tuning.lambda_grid, vec![f64::INFINITY, 4.0]);
        assert!(c.lambda().is_infinite());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[solver]\ngap = 1\n").is_err());
    }
}
