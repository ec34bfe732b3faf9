//! End-to-end fit: robust standardization, heuristic ensemble, big-M bounds,
//! branch-and-bound, and back-transformation to the original scale.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::heuristics::{
    default_ensemble, dfo_local_search, random_start_concentration, ridge_init, with_ensemble_bounds,
    HeuristicConfig,
};
use crate::model::{Dataset, SfsodProblem, Solution, SolveStatus};
use crate::solver::{solve, BoundMode, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Mixed-integer solve with heuristic warm starts.
    Mip,
    /// Best of the two local searches (from zero and from a ridge fit).
    DfoHeuristic,
    /// Best random-start concentration fit.
    ConcentrationHeuristic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub solver: SolverConfig,
    pub heuristics: HeuristicConfig,
    /// Skip robust standardization (the data are used as given).
    pub raw: bool,
}

/// A fit in both scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Coefficients on the original scale (intercept first when present).
    pub beta: Vec<f64>,
    /// Mean shifts; the response is only centred, so these need no transformation.
    pub phi: Vec<f64>,
    /// Solution of the standardized program, with its certificate.
    pub standardized: Solution,
    /// Objective of `(beta, phi)` on the original data.
    pub objective: f64,
}

impl FitResult {
    pub fn feature_support(&self) -> Vec<usize> {
        self.standardized.feature_support()
    }

    pub fn case_support(&self) -> Vec<usize> {
        self.standardized.case_support()
    }
}

/// Builds the standardized problem for `data`.
pub fn prepare(data: &Dataset, k_p: usize, k_n: usize, lambda: f64, raw: bool) -> Result<SfsodProblem> {
    let std = if raw { data.clone() } else { data.standardize_robust()? };
    SfsodProblem::new(std, k_p, k_n)?.with_lambda(lambda)
}

/// Solves a prepared problem with `method`, starting from `extra_warm` in
/// addition to the heuristic ensemble.
pub fn solve_prepared(
    problem: &SfsodProblem,
    method: Method,
    cfg: &FitConfig,
    extra_warm: &[Solution],
) -> Result<Solution> {
    let hc = &cfg.heuristics;
    match method {
        Method::DfoHeuristic => {
            let a = dfo_local_search(problem, &vec![0.0; problem.p()], hc.max_iter);
            let b = dfo_local_search(problem, &ridge_init(problem), hc.max_iter);
            Ok(if b.objective < a.objective { b } else { a })
        }
        Method::ConcentrationHeuristic => {
            let mut sols = random_start_concentration(problem, hc);
            Ok(sols.swap_remove(0))
        }
        Method::Mip => {
            let set = default_ensemble(problem, hc);
            let bounded = if cfg.solver.bound_mode == BoundMode::BigM {
                with_ensemble_bounds(problem, &set, hc)?
            } else {
                problem.clone()
            };
            let mut warm = set.warm_starts(&bounded);
            warm.extend(extra_warm.iter().cloned());
            solve(&bounded, &cfg.solver, &warm)
        }
    }
}

/// Fits `data` with budgets `(k_p, k_n)` and ridge radius `lambda` (on the
/// standardized scale), returning coefficients on the original scale.
pub fn fit(data: &Dataset, k_p: usize, k_n: usize, lambda: f64, method: Method, cfg: &FitConfig) -> Result<FitResult> {
    let problem = prepare(data, k_p, k_n, lambda, cfg.raw)?;
    let sol = solve_prepared(&problem, method, cfg, &[])?;
    finish(data, &problem, sol)
}

/// Back-transforms a solution of `problem` (prepared from `data`).
pub fn finish(data: &Dataset, problem: &SfsodProblem, sol: Solution) -> Result<FitResult> {
    let beta = match problem.data.standardization() {
        Some(st) if data.standardization().is_none() => st.coefficients_to_original(&sol.beta, data.intercept()),
        _ => sol.beta.clone(),
    };
    let phi = sol.phi.clone();
    let objective = crate::model::objective(&SfsodProblem::new(data.clone(), problem.k_p, problem.k_n)?, &beta, &phi)?;
    Ok(FitResult {
        beta,
        phi,
        standardized: sol,
        objective,
    })
}

/// True when the solve closed its gap.
pub fn certified(sol: &Solution) -> bool {
    sol.status == SolveStatus::Optimal
}
