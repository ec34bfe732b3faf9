//! Data-driven choice of the budgets: fix `λ`, start `k_n` above the expected
//! contamination, tune `k_p` by trimmed cross-validation or BIC, then lower
//! `k_n` while the least outlying trimmed case still looks like an outlier.
//!
//! `k_p` here counts selectable features and excludes the intercept; reported
//! model sizes (`BicPoint::size`) include it.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::fit::{retained_cases, support_columns};
use crate::model::{Dataset, SfsodProblem, Solution, SolveStatus};
use crate::oracle::deletion_residuals_on;
use crate::pipeline::{finish, prepare, solve_prepared, FitConfig, Method};
use crate::rng::{keyed_rng, streams};
use crate::robust::top_k_abs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMethod {
    TrimmedCv,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningPlan {
    /// Ridge radii tried in turn; `inf` disables the constraint.
    pub lambda_grid: Vec<f64>,
    /// Starting trim budget; `None` means `⌈0.2 n⌉`.
    pub kn_start: Option<usize>,
    /// Candidate `k_p` values (intercept excluded); empty means model sizes
    /// `1..=2·expected_p0`.
    pub kp_grid: Vec<usize>,
    /// Expected number of active coefficients, intercept included.
    pub expected_p0: usize,
    pub method: TuningMethod,
    pub folds: usize,
    pub seed: u64,
    /// Level of the deletion-residual threshold when refining `k_n`.
    pub alpha: f64,
    /// Worker threads for independent fits.
    pub threads: usize,
}

impl Default for TuningPlan {
    fn default() -> Self {
        TuningPlan {
            lambda_grid: vec![f64::INFINITY],
            kn_start: None,
            kp_grid: Vec::new(),
            expected_p0: 5,
            method: TuningMethod::TrimmedCv,
            folds: 10,
            seed: 0,
            alpha: 0.01,
            threads: 1,
        }
    }
}

impl TuningPlan {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.len() > 3 {
            return Err(Error::config("lambda_grid", "must hold 1 to 3 values"));
        }
        if self.lambda_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(Error::config("lambda_grid", "values must be nonnegative"));
        }
        if self.kp_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("kp_grid", "must be strictly increasing"));
        }
        if self.kp_grid.is_empty() && self.expected_p0 == 0 {
            return Err(Error::config("expected_p0", "must be positive"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// The `k_p` grid for data with `selectable` choosable features.
    pub fn kp_values(&self, data: &Dataset) -> Vec<usize> {
        let max = data.n_selectable();
        if self.kp_grid.is_empty() {
            let sizes = 2 * self.expected_p0;
            let off = usize::from(data.intercept());
            (1 - off..=sizes - off).filter(|&k| k <= max).collect()
        } else {
            self.kp_grid.iter().copied().filter(|&k| k <= max).collect()
        }
    }

    pub fn kn_start_for(&self, n: usize) -> usize {
        self.kn_start.unwrap_or_else(|| (0.2 * n as f64).ceil() as usize)
    }
}

/// Runs `f` on every index, on up to `threads` workers, returning results in index order.
fn par_map<T: Send>(len: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if threads <= 1 || len <= 1 {
        return (0..len).map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<Option<T>> = (0..len).map(|_| None).collect();
    let chunks: Vec<Vec<(usize, T)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads.min(len))
            .map(|_| {
                s.spawn(|| {
                    let mut got = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= len {
                            break;
                        }
                        got.push((i, f(i)));
                    }
                    got
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("tuning worker panicked")).collect()
    });
    for (i, v) in chunks.into_iter().flatten() {
        out[i] = Some(v);
    }
    out.into_iter().map(|v| v.expect("every index visited")).collect()
}

/// Mean of the squared errors left after dropping the `trim` largest.
pub fn upper_trimmed_mean(errors: &[f64], trim: usize) -> f64 {
    let mut sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    sq.sort_by(f64::total_cmp);
    let keep = sq.len().saturating_sub(trim);
    if keep == 0 {
        return f64::NAN;
    }
    sq[..keep].iter().sum::<f64>() / keep as f64
}

/// `⌈rate · size⌉`.
fn trim_count(rate: f64, size: usize) -> usize {
    (rate * size as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Fold labels from a uniform random permutation: fold `f` holds the
/// positions `f, f + folds, …` of the permuted order.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut keyed_rng(seed, 0, streams::FOLDS));
    let mut label = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub k_p: usize,
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub selected: usize,
    pub scores: Vec<CvScore>,
    pub train_trim: Vec<usize>,
    pub test_trim: Vec<usize>,
}

/// Index of the smallest value; the first wins ties and NaN never wins.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Cross-validated choice of `k_p` at trim budget `k_n`, with trim counts
/// `⌈2k_n/n · |train|⌉` for the training fits and `⌈3k_n/n · |test|⌉` for the
/// test-fold score. `data` is on its original scale; each training fold is
/// standardized on its own.
pub fn trimmed_cv(
    data: &Dataset,
    k_n: usize,
    lambda: f64,
    plan: &TuningPlan,
    method: Method,
    cfg: &FitConfig,
) -> Result<CvResult> {
    plan.validate()?;
    let n = data.n();
    let grid = plan.kp_values(data);
    if grid.is_empty() {
        return Err(Error::config("kp_grid", "no value fits the data"));
    }
    let labels = fold_assignment(n, plan.folds, plan.seed);
    let members: Vec<Vec<usize>> = (0..plan.folds)
        .map(|f| (0..n).filter(|&i| labels[i] == f).collect())
        .collect();
    let rate = k_n as f64 / n as f64;
    let mut train_trim = Vec::with_capacity(plan.folds);
    let mut test_trim = Vec::with_capacity(plan.folds);
    for test in &members {
        let train = n - test.len();
        let (a, b) = (trim_count(2.0 * rate, train), trim_count(3.0 * rate, test.len()));
        if test.len() < 2 || b >= test.len() {
            return Err(Error::FoldTooSmall(format!(
                "test fold of {} cases cannot drop {b} and keep one",
                test.len()
            )));
        }
        let need = a + grid.last().copied().unwrap_or(0) + usize::from(data.intercept()) + 1;
        if train < need {
            return Err(Error::FoldTooSmall(format!(
                "training fold of {train} cases needs at least {need}"
            )));
        }
        train_trim.push(a);
        test_trim.push(b);
    }

    let jobs: Vec<(usize, usize)> = (0..plan.folds)
        .flat_map(|f| (0..grid.len()).map(move |g| (f, g)))
        .collect();
    let results = par_map(jobs.len(), plan.threads, |j| -> Result<f64> {
        let (f, g) = jobs[j];
        let test = &members[f];
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let tr = data.subset_rows(&train);
        let problem = prepare(&tr, grid[g], train_trim[f], lambda, cfg.raw)?;
        let sol = solve_prepared(&problem, method, cfg, &[])?;
        let fit = finish(&tr, &problem, sol)?;
        let errors: Vec<f64> = test
            .iter()
            .map(|&i| data.y()[i] - crate::linalg::dot(data.x().row(i), &fit.beta))
            .collect();
        Ok(upper_trimmed_mean(&errors, test_trim[f]))
    });
    let mut fold_scores = vec![vec![0.0; plan.folds]; grid.len()];
    for (&(f, g), r) in jobs.iter().zip(results) {
        fold_scores[g][f] = r?;
    }
    let scores: Vec<CvScore> = grid
        .iter()
        .zip(fold_scores)
        .map(|(&k_p, fs)| CvScore {
            k_p,
            score: fs.iter().sum::<f64>() / fs.len() as f64,
            fold_scores: fs,
        })
        .collect();
    let best = argmin(&scores.iter().map(|s| s.score).collect::<Vec<_>>());
    Ok(CvResult {
        selected: scores[best].k_p,
        scores,
        train_trim,
        test_trim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPoint {
    pub k_p: usize,
    /// Model size `k_p*`, intercept included.
    pub size: usize,
    /// Retained cases `h = n − k_n`.
    pub h: usize,
    /// Mean squared residual over the `h` retained cases.
    pub loss: f64,
    pub bic: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicResult {
    pub selected: usize,
    pub path: Vec<BicPoint>,
}

/// `k* ln h + h ln L`.
pub fn bic_value(size: usize, h: usize, loss: f64) -> f64 {
    size as f64 * (h as f64).ln() + h as f64 * loss.ln()
}

/// Position of the elbow of `bic`: the largest decrease between consecutive
/// entries, or 0 when nothing decreases.
pub fn elbow(bic: &[f64]) -> usize {
    let mut best = 0;
    let mut best_drop = 0.0;
    for i in 1..bic.len() {
        let d = bic[i] - bic[i - 1];
        if d < best_drop {
            best_drop = d;
            best = i;
        }
    }
    best
}

/// Mean squared residual of `beta` over the `h` best-fitting cases.
fn retained_loss(data: &Dataset, beta: &[f64], h: usize) -> f64 {
    let r = data.residuals(beta);
    let trimmed = top_k_abs(&r, data.n() - h);
    let keep = retained_cases(data.n(), &trimmed);
    keep.iter().map(|&i| r[i] * r[i]).sum::<f64>() / h as f64
}

/// BIC path over the plan's `k_p` grid on the prepared `problem` (its own
/// `k_p` is ignored), each fit warm-started from the previous size.
pub fn bic_path(problem: &SfsodProblem, plan: &TuningPlan, method: Method, cfg: &FitConfig) -> Result<BicResult> {
    plan.validate()?;
    let data = &problem.data;
    let h = problem.n() - problem.k_n;
    if h < 2 {
        return Err(Error::InvalidProblem(format!("h = n − k_n = {h} must be at least 2")));
    }
    let grid = plan.kp_values(data);
    if grid.is_empty() {
        return Err(Error::config("kp_grid", "no value fits the data"));
    }
    let mut path = Vec::with_capacity(grid.len());
    let mut prev: Option<Solution> = None;
    for &k_p in &grid {
        let pb = problem.with_budgets(k_p, problem.k_n)?;
        let warm: Vec<Solution> = prev.iter().map(|s| rebase(&pb, s)).collect::<Result<_>>()?;
        let mut sol = solve_prepared(&pb, method, cfg, &warm)?;
        if let Some(w) = warm.first() {
            if w.objective < sol.objective {
                let mut w = w.clone();
                w.status = SolveStatus::Heuristic;
                sol = w;
            }
        }
        let loss = retained_loss(data, &sol.beta, h);
        let size = k_p + usize::from(data.intercept());
        path.push(BicPoint {
            k_p,
            size,
            h,
            loss,
            bic: bic_value(size, h, loss),
            objective: sol.objective,
            status: sol.status,
            gap: sol.gap,
        });
        prev = Some(sol);
    }
    let best = elbow(&path.iter().map(|p| p.bic).collect::<Vec<_>>());
    Ok(BicResult {
        selected: path[best].k_p,
        path,
    })
}

/// Re-evaluates a solution of a neighbouring problem as a starting point for `problem`.
fn rebase(problem: &SfsodProblem, sol: &Solution) -> Result<Solution> {
    Solution::from_point(problem, sol.beta.clone(), sol.phi.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnStep {
    pub k_n: usize,
    /// Smallest absolute deletion residual among trimmed cases; `NaN` at `k_n = 0`.
    pub min_abs_deletion: f64,
    pub threshold: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub selected: usize,
    pub trace: Vec<KnStep>,
}

/// Two-sided Bonferroni cutoff `t_{1 − α/(2n)}` with `n − k_p − 1` degrees of freedom.
pub fn deletion_threshold(n: usize, k_p: usize, alpha: f64) -> f64 {
    let df = n.saturating_sub(k_p + 1).max(1) as f64;
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    t.inverse_cdf(1.0 - alpha / (2.0 * n as f64))
}

/// Lowers `k_n` from `kn_start` until every trimmed case has an absolute
/// deletion residual above the threshold, and returns that `k_n` (0 if none
/// qualifies). Each step fits the prepared `problem` with budgets `(k_p, k_n)`.
pub fn refine_kn(
    problem: &SfsodProblem,
    k_p: usize,
    kn_start: usize,
    alpha: f64,
    method: Method,
    cfg: &FitConfig,
) -> Result<RefineResult> {
    let n = problem.n();
    let threshold = deletion_threshold(n, k_p, alpha);
    let mut trace = Vec::new();
    for k_n in (0..=kn_start).rev() {
        let pb = problem.with_budgets(k_p, k_n)?;
        let sol = solve_prepared(&pb, method, cfg, &[])?;
        let stat = if k_n == 0 {
            f64::NAN
        } else {
            let trimmed = top_k_abs(&pb.data.residuals(&sol.beta), k_n);
            let keep = retained_cases(n, &trimmed);
            let cols = support_columns(&pb, &sol.feature_support());
            let t = deletion_residuals_on(&pb.data, &cols, &keep)?;
            trimmed.iter().map(|&i| t[i].abs()).fold(f64::INFINITY, f64::min)
        };
        trace.push(KnStep {
            k_n,
            min_abs_deletion: stat,
            threshold,
            objective: sol.objective,
            status: sol.status,
            gap: sol.gap,
        });
        if stat > threshold {
            return Ok(RefineResult { selected: k_n, trace });
        }
    }
    Ok(RefineResult { selected: 0, trace })
}

/// One `λ` of a full tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRun {
    pub lambda: f64,
    pub k_p: usize,
    pub k_n: usize,
    /// Criterion value at the selected `k_p` (CV score or BIC).
    pub criterion: f64,
    pub cv: Option<CvResult>,
    pub bic: Option<BicResult>,
    pub refine: RefineResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub k_p: usize,
    pub k_n: usize,
    pub lambda: f64,
    pub kn_start: usize,
    pub runs: Vec<LambdaRun>,
}

/// The full protocol on `data` (original scale). Across `λ` values the run
/// with the smallest criterion wins, the first on ties.
pub fn tune(data: &Dataset, plan: &TuningPlan, method: Method, cfg: &FitConfig) -> Result<TuningResult> {
    plan.validate()?;
    let kn_start = plan.kn_start_for(data.n());
    if kn_start == 0 || kn_start >= data.n() {
        return Err(Error::config("kn_start", format!("must lie in 1..{}", data.n())));
    }
    let mut runs = Vec::with_capacity(plan.lambda_grid.len());
    for &lambda in &plan.lambda_grid {
        let problem = prepare(data, 0, kn_start, lambda, cfg.raw)?;
        let (k_p, criterion, cv, bic) = match plan.method {
            TuningMethod::TrimmedCv => {
                let cv = trimmed_cv(data, kn_start, lambda, plan, method, cfg)?;
                let score = cv.scores.iter().find(|s| s.k_p == cv.selected).map_or(f64::NAN, |s| s.score);
                (cv.selected, score, Some(cv), None)
            }
            TuningMethod::Bic => {
                let b = bic_path(&problem, plan, method, cfg)?;
                let v = b.path.iter().find(|p| p.k_p == b.selected).map_or(f64::NAN, |p| p.bic);
                (b.selected, v, None, Some(b))
            }
        };
        let refine = refine_kn(&problem, k_p, kn_start, plan.alpha, method, cfg)?;
        runs.push(LambdaRun {
            lambda,
            k_p,
            k_n: refine.selected,
            criterion,
            cv,
            bic,
            refine,
        });
    }
    let best = argmin(&runs.iter().map(|r| r.criterion).collect::<Vec<_>>());
    Ok(TuningResult {
        k_p: runs[best].k_p,
        k_n: runs[best].k_n,
        lambda: runs[best].lambda,
        kn_start,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_trim() {
        let e = [1f64.sqrt(), -(2f64.sqrt()), 3f64.sqrt(), 10.0];
        assert!((upper_trimmed_mean(&e, 1) - 2.0).abs() < 1e-12);
        assert!((upper_trimmed_mean(&e, 0) - 26.5).abs() < 1e-12);
    }

    #[test]
    fn trim_counts_round_up() {
        assert_eq!(trim_count(0.0, 90), 0);
        assert_eq!(trim_count(0.2, 90), 18);
        assert_eq!(trim_count(0.001, 10), 1);
        assert_eq!(trim_count(0.3, 10), 3);
    }

    #[test]
    fn folds_partition_evenly() {
        let l = fold_assignment(23, 5, 9);
        let mut counts = [0; 5];
        for f in &l {
            counts[*f] += 1;
        }
        assert_eq!(counts, [5, 5, 5, 4, 4]);
        assert_eq!(l, fold_assignment(23, 5, 9));
        assert_ne!(l, fold_assignment(23, 5, 10));
    }

    #[test]
    fn bic_formula() {
        let v = bic_value(3, 90, 1.7);
        assert!((v - (3.0 * 90f64.ln() + 90.0 * 1.7f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn elbow_rules() {
        let h = 90.0f64;
        let flat: Vec<f64> = (1..=6).map(|k| k as f64 * h.ln() + h * 2.0f64.ln()).collect();
        assert_eq!(elbow(&flat), 0);
        let losses = [9.0, 7.0, 6.0, 5.5, 1.0, 0.98, 0.97];
        let path: Vec<f64> = losses.iter().enumerate().map(|(k, l)| bic_value(k + 1, 90, *l)).collect();
        assert_eq!(elbow(&path), 4);
    }

    #[test]
    fn threshold_matches_t_quantile() {
        let t = deletion_threshold(100, 4, 0.01);
        // t_{0.99995} with 95 df.
        assert!(t > 4.0 && t < 4.2, "{t}");
        assert!(deletion_threshold(100, 4, 0.05) < t);
    }

    #[test]
    fn default_grid_counts_model_sizes() {
        let data = crate::simulation::generate_scenario(&Default::default(), 0).unwrap().train;
        let plan = TuningPlan::default();
        assert_eq!(plan.kp_values(&data), (0..10).collect::<Vec<_>>());
        assert_eq!(plan.kn_start_for(100), 20);
    }

    #[test]
    fn invalid_plans() {
        let p = TuningPlan {
            folds: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = TuningPlan {
            kp_grid: vec![3, 2],
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = TuningPlan {
            lambda_grid: vec![1.0, 2.0, 3.0, 4.0],
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
