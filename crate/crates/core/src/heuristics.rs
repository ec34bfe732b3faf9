//! Warm starts and data-driven big-M bounds.
//!
//! Fast approximate estimators feed the solver:
//!
//! * a discrete first-order local search (projected gradient on the trimmed
//!   loss with hard thresholding to `k_p` features),
//! * concentration steps (alternate a sparse fit on the retained cases with
//!   re-selecting the `n − k_n` cases of smallest residual),
//! * random elemental starts refined by concentration steps,
//! * a screened start: features ranked by robust univariate slopes, a
//!   low-dimensional random-start trimmed fit on the top `k_p`, then
//!   concentration steps on the full problem.
//!
//! The best of them is polished by single-feature swaps.
//!
//! Their coefficient and residual magnitudes, inflated by a constant
//! `c ≥ 1`, give the big-M boxes of the mixed-integer program.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_support, retained_cases, SupportFit};
use crate::linalg::penalized_least_squares;
use crate::model::{objective, optimal_phi_given_beta, trimmed_loss, Dataset, SfsodProblem, Solution};
use crate::rng::{keyed_rng, streams};
use crate::robust::{mad, median, top_k_abs};

/// Knobs for the heuristic ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Iteration cap for each local search.
    pub max_iter: usize,
    /// Random elemental subsamples drawn before concentration.
    pub n_starts: usize,
    /// Subsamples kept for concentration steps.
    pub keep_best: usize,
    /// Iteration cap for concentration steps.
    pub cstep_max_iter: usize,
    /// Bound inflation constant `c ≥ 1`.
    pub bound_factor: f64,
    /// Floor for zero bounds, as a multiple of the response MAD.
    pub floor_factor: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            max_iter: 500,
            n_starts: 1000,
            keep_best: 20,
            cstep_max_iter: 50,
            bound_factor: 2.0,
            floor_factor: 1e-3,
            seed: 0,
            threads: 1,
        }
    }
}

/// One heuristic fit: its coefficients and the raw residuals `y − Xβ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn push(&mut self, data: &Dataset, beta: Vec<f64>, provenance: impl Into<String>) {
        let residuals = data.residuals(&beta);
        self.candidates.push(Candidate {
            beta,
            residuals,
            provenance: provenance.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Each candidate as a feasible point of `problem` (optimal `φ` for its `β`).
    pub fn warm_starts(&self, problem: &SfsodProblem) -> Vec<Solution> {
        self.candidates
            .iter()
            .map(|c| {
                let beta = hard_threshold(problem, &c.beta);
                let phi = optimal_phi_given_beta(problem, &beta).expect("candidate length");
                Solution::from_point(problem, beta, phi).expect("candidate length")
            })
            .collect()
    }
}

/// Keeps the intercept and the `k_p` largest-magnitude selectable coefficients,
/// then scales the penalized part onto the ridge ball if needed.
pub fn hard_threshold(problem: &SfsodProblem, beta: &[f64]) -> Vec<f64> {
    let off = usize::from(problem.intercept());
    let mut out = vec![0.0; beta.len()];
    if off == 1 {
        out[0] = beta[0];
    }
    for j in top_k_abs(&beta[off..], problem.k_p) {
        out[j + off] = beta[j + off];
    }
    if problem.ridge_active() {
        let n2: f64 = out[off..].iter().map(|b| b * b).sum();
        if n2 > problem.lambda {
            let s = if n2 > 0.0 { (problem.lambda / n2).sqrt() } else { 0.0 };
            out[off..].iter_mut().for_each(|b| *b *= s);
        }
    }
    out
}

fn nonzero_features(problem: &SfsodProblem, beta: &[f64]) -> Vec<usize> {
    problem
        .data
        .selectable()
        .filter(|&j| beta[j] != 0.0)
        .collect()
}

/// Step constant for the local search: largest eigenvalue of `XᵀX / n`.
pub fn lipschitz(data: &Dataset) -> f64 {
    data.x().gram_spectral_norm(1e-6, 1000) / data.n() as f64
}

/// Result of a local search together with its objective trace.
#[derive(Debug, Clone)]
pub struct Traced {
    pub solution: Solution,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
}

/// Discrete first-order local search from `init_beta`.
///
/// The initial point is `init_beta` hard-thresholded to `k_p` features with
/// its optimal shifts. Each step takes a gradient step of length `1/L` on the
/// loss with `φ` fixed, hard-thresholds, and resets `φ` by trimming; steps
/// that would increase the objective end the search. The result is then
/// polished by exact refits on its support, alternated with re-trimming.
pub fn dfo_local_search(problem: &SfsodProblem, init_beta: &[f64], max_iter: usize) -> Solution {
    dfo_local_search_traced(problem, init_beta, max_iter).solution
}

pub fn dfo_local_search_traced(problem: &SfsodProblem, init_beta: &[f64], max_iter: usize) -> Traced {
    let lip = lipschitz(&problem.data);
    dfo_with_step(problem, init_beta, max_iter.max(1), lip)
}

fn dfo_with_step(problem: &SfsodProblem, init_beta: &[f64], max_iter: usize, lip: f64) -> Traced {
    let data = &problem.data;
    let n = data.n() as f64;
    let mut beta = hard_threshold(problem, init_beta);
    let mut phi = optimal_phi_given_beta(problem, &beta).expect("beta length");
    let mut obj = objective(problem, &beta, &phi).expect("lengths");
    let mut trace = vec![obj];

    if lip > 0.0 {
        for _ in 0..max_iter {
            let r: Vec<f64> = data
                .residuals(&beta)
                .iter()
                .zip(&phi)
                .map(|(e, f)| e - f)
                .collect();
            let g = data.x().tr_mul_vec(&r);
            let step: Vec<f64> = beta
                .iter()
                .zip(&g)
                .map(|(b, gj)| b + gj / (n * lip))
                .collect();
            let next = hard_threshold(problem, &step);
            let next_phi = optimal_phi_given_beta(problem, &next).expect("beta length");
            let next_obj = objective(problem, &next, &next_phi).expect("lengths");
            if next_obj > obj {
                break;
            }
            let small = obj - next_obj <= 1e-12 * obj.max(1e-300);
            beta = next;
            phi = next_phi;
            obj = next_obj;
            trace.push(obj);
            if small {
                break;
            }
        }
    }

    // Polish: exact refit on the support, then re-trim, until the trimmed set settles.
    for _ in 0..50 {
        let features = nonzero_features(problem, &beta);
        let trimmed: Vec<usize> = (0..data.n()).filter(|&i| phi[i] != 0.0).collect();
        let fit = fit_support(problem, &features, &trimmed, false);
        let new_phi = optimal_phi_given_beta(problem, &fit.beta).expect("beta length");
        let new_obj = objective(problem, &fit.beta, &new_phi).expect("lengths");
        if !(new_obj < obj) {
            break;
        }
        let settled = new_phi
            .iter()
            .zip(&phi)
            .all(|(a, b)| (*a != 0.0) == (*b != 0.0));
        beta = fit.beta;
        phi = new_phi;
        obj = new_obj;
        trace.push(obj);
        if settled {
            break;
        }
    }

    let solution = Solution::from_point(problem, beta, phi).expect("lengths");
    Traced { solution, trace }
}

/// Concentration steps from an initial retained subset of size `n − k_n`.
///
/// Alternates a `k_p`-sparse local search restricted to the retained cases
/// with re-selecting the `n − k_n` cases of smallest absolute residual, until
/// the retained subset stops changing or `max_iter` is reached.
pub fn concentration_steps(problem: &SfsodProblem, init_subset: &[usize], max_iter: usize) -> Solution {
    concentration_from(problem, init_subset, None, max_iter, 200).solution
}

pub fn concentration_steps_traced(problem: &SfsodProblem, init_subset: &[usize], max_iter: usize) -> Traced {
    concentration_from(problem, init_subset, None, max_iter, 200)
}

fn concentration_from(
    problem: &SfsodProblem,
    init_subset: &[usize],
    init_beta: Option<&[f64]>,
    max_iter: usize,
    inner_iter: usize,
) -> Traced {
    let data = &problem.data;
    let n = data.n();
    let h = n - problem.k_n;
    let mut subset: Vec<usize> = init_subset.to_vec();
    subset.sort_unstable();
    subset.dedup();
    let mut beta = match init_beta {
        Some(b) => hard_threshold(problem, b),
        None => vec![0.0; data.p()],
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        let sub = data.subset_rows(&subset);
        let sub_pb = SfsodProblem {
            data: sub,
            k_p: problem.k_p,
            k_n: 0,
            lambda: problem.lambda,
            bigm_beta: None,
            bigm_phi: None,
        };
        let fit = dfo_local_search(&sub_pb, &beta, inner_iter);
        beta = fit.beta;
        let e = data.residuals(&beta);
        let trimmed = top_k_abs(&e, problem.k_n);
        let next = retained_cases(n, &trimmed);
        debug_assert_eq!(next.len(), h);
        let phi = optimal_phi_given_beta(problem, &beta).expect("beta length");
        let obj = objective(problem, &beta, &phi).expect("lengths");
        match &best {
            Some((_, b)) if obj >= *b => {
                // No progress: the subset is a fixed point up to rounding.
                break;
            }
            _ => {
                best = Some((beta.clone(), obj));
                trace.push(obj);
            }
        }
        if next == subset {
            break;
        }
        subset = next;
    }

    let (beta, _) = best.expect("at least one concentration step");
    let phi = optimal_phi_given_beta(problem, &beta).expect("beta length");
    let solution = Solution::from_point(problem, beta, phi).expect("lengths");
    Traced { solution, trace }
}

/// Random elemental starts refined by concentration steps: draw `n_starts`
/// subsamples of size `k_p + 2` (plus one for the intercept), fit each
/// sparsely, keep the `keep_best` with the smallest trimmed loss on the full
/// data and iterate concentration steps from each. Results are sorted by
/// objective (ties by start index).
pub fn random_start_concentration(problem: &SfsodProblem, cfg: &HeuristicConfig) -> Vec<Solution> {
    let data = &problem.data;
    let n = data.n();
    let h0 = (problem.k_p + usize::from(problem.intercept()) + 1).clamp(2, n);
    let mut rng = keyed_rng(cfg.seed, 0, streams::SUBSAMPLES);
    let mut scored: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(cfg.n_starts);
    for s in 0..cfg.n_starts {
        let mut rows: Vec<usize> = sample(&mut rng, n, h0).into_vec();
        rows.sort_unstable();
        let sub_pb = SfsodProblem {
            data: data.subset_rows(&rows),
            k_p: problem.k_p.min(h0.saturating_sub(1 + usize::from(problem.intercept()))),
            k_n: 0,
            lambda: problem.lambda,
            bigm_beta: None,
            bigm_phi: None,
        };
        let lip = lipschitz(&sub_pb.data);
        let fit = dfo_with_step(&sub_pb, &vec![0.0; data.p()], 20, lip).solution;
        let beta = fit.beta;
        let loss = crate::model::trimmed_loss(problem, &beta).expect("beta length");
        if loss.is_finite() {
            scored.push((loss, s, beta));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(cfg.keep_best.max(1));

    let mut out: Vec<(f64, usize, Solution)> = scored
        .into_iter()
        .map(|(_, s, beta)| {
            let e = data.residuals(&beta);
            let subset = retained_cases(n, &top_k_abs(&e, problem.k_n));
            let sol = concentration_from(problem, &subset, Some(&beta), cfg.cstep_max_iter, cfg.max_iter.min(200)).solution;
            (sol.objective, s, sol)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.into_iter().map(|(_, _, s)| s).collect()
}

/// Siegel's repeated-median slope of `y` on `x`: the median over `i` of the
/// median slope through case `i`. Pairs with equal `x` are skipped.
pub fn repeated_median_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut inner = Vec::with_capacity(n);
    let mut outer = Vec::with_capacity(n);
    for i in 0..n {
        inner.clear();
        for k in 0..n {
            let dx = x[k] - x[i];
            if k != i && dx != 0.0 {
                inner.push((y[k] - y[i]) / dx);
            }
        }
        if !inner.is_empty() {
            outer.push(median(&inner));
        }
    }
    if outer.is_empty() {
        0.0
    } else {
        median(&outer)
    }
}

/// Robust marginal association of each selectable column with the response:
/// `|slope| · MAD(x_j) / MAD(y − slope · x_j)`, with the repeated-median slope.
pub fn screening_scores(data: &Dataset) -> Vec<f64> {
    data.selectable()
        .map(|j| {
            let x = data.x().column(j);
            let b = repeated_median_slope(&x, data.y());
            let r: Vec<f64> = data.y().iter().zip(&x).map(|(y, xv)| y - b * xv).collect();
            let s = mad(&r);
            let sx = mad(&x);
            if s > 0.0 {
                b.abs() * sx / s
            } else if b != 0.0 && sx > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

/// Screened start: keep the `k_p` columns with the largest screening scores,
/// fit them by random-start concentration, and release the feature
/// restriction for a final round of concentration steps.
pub fn screened_concentration(problem: &SfsodProblem, cfg: &HeuristicConfig) -> Solution {
    let data = &problem.data;
    let off = usize::from(problem.intercept());
    let scores = screening_scores(data);
    let mut chosen: Vec<usize> = top_k_abs(&scores, problem.k_p).into_iter().map(|k| k + off).collect();
    chosen.sort_unstable();
    let mut cols = Vec::with_capacity(chosen.len() + 1);
    if off == 1 {
        cols.push(0);
    }
    cols.extend(&chosen);
    let sub = SfsodProblem {
        data: data.subset_cols(&cols),
        k_p: chosen.len(),
        k_n: problem.k_n,
        lambda: problem.lambda,
        bigm_beta: None,
        bigm_phi: None,
    };
    let sub_cfg = HeuristicConfig {
        n_starts: cfg.n_starts.min(200),
        keep_best: cfg.keep_best.min(5),
        ..cfg.clone()
    };
    let mut beta = vec![0.0; problem.p()];
    if let Some(best) = random_start_concentration(&sub, &sub_cfg).into_iter().next() {
        for (&c, b) in cols.iter().zip(&best.beta) {
            beta[c] = *b;
        }
    }
    let e = data.residuals(&beta);
    let subset = retained_cases(data.n(), &top_k_abs(&e, problem.k_n));
    concentration_from(problem, &subset, Some(&beta), cfg.cstep_max_iter, cfg.max_iter.min(200)).solution
}

/// Refits `features` with `trimmed` removed, then re-trims the largest
/// residuals while that helps (at most twice).
fn refit_retrim(problem: &SfsodProblem, features: &[usize], trimmed: Vec<usize>) -> (SupportFit, Vec<usize>) {
    let mut t = trimmed;
    let mut fit = fit_support(problem, features, &t, false);
    for _ in 0..2 {
        let mut next = top_k_abs(&problem.data.residuals(&fit.beta), problem.k_n);
        next.sort_unstable();
        if next == t {
            break;
        }
        let cand = fit_support(problem, features, &next, false);
        if cand.objective >= fit.objective {
            break;
        }
        t = next;
        fit = cand;
    }
    (fit, t)
}

/// Best-improvement local search over supports: each round tries every swap
/// of an active feature for an inactive one (and every addition while below
/// `k_p`), refitting with re-trimming, and moves to the best strict improvement.
pub fn swap_search(problem: &SfsodProblem, beta: &[f64], max_rounds: usize) -> Solution {
    let data = &problem.data;
    let mut feats = nonzero_features(problem, beta);
    let mut trimmed = top_k_abs(&data.residuals(beta), problem.k_n);
    trimmed.sort_unstable();
    let (mut cur, t) = refit_retrim(problem, &feats, trimmed);
    trimmed = t;
    for _ in 0..max_rounds {
        let inactive: Vec<usize> = data.selectable().filter(|j| !feats.contains(j)).collect();
        let mut moves: Vec<Vec<usize>> = Vec::new();
        if feats.len() < problem.k_p {
            for &l in &inactive {
                let mut f = feats.clone();
                f.push(l);
                moves.push(f);
            }
        }
        for k in 0..feats.len() {
            for &l in &inactive {
                let mut f = feats.clone();
                f[k] = l;
                moves.push(f);
            }
        }
        let mut best: Option<(SupportFit, Vec<usize>, Vec<usize>)> = None;
        for mut f in moves {
            f.sort_unstable();
            let (fit, t) = refit_retrim(problem, &f, trimmed.clone());
            let target = best.as_ref().map_or(cur.objective, |b| b.0.objective);
            if fit.objective < target - 1e-12 * target.abs().max(1.0) {
                best = Some((fit, t, f));
            }
        }
        match best {
            Some((fit, t, f)) => {
                cur = fit;
                trimmed = t;
                feats = f;
            }
            None => break,
        }
    }
    for _ in 0..50 {
        let (fit, t) = refit_retrim(problem, &feats, trimmed.clone());
        if t == trimmed {
            break;
        }
        cur = fit;
        trimmed = t;
    }
    Solution::from_point(problem, cur.beta, cur.phi).expect("support fit has problem dimensions")
}

/// Non-sparse ridge fit on all cases, used to seed one ensemble member.
pub fn ridge_init(problem: &SfsodProblem) -> Vec<f64> {
    let data = &problem.data;
    let rows: Vec<usize> = (0..data.n()).collect();
    let cols: Vec<usize> = (0..data.p()).collect();
    let mu = 1e-3 * data.n() as f64;
    let pen: Vec<f64> = cols
        .iter()
        .map(|&c| if problem.intercept() && c == 0 { 0.0 } else { mu })
        .collect();
    penalized_least_squares(data.x(), data.y(), &rows, &cols, &pen).coef
}

/// Big-M bounds from an ensemble: coordinatewise maxima of `|β̃|` and `|ẽ|`
/// across candidates, times `c`. Coordinates whose maximum is zero get `floor`.
pub fn ensemble_bounds(set: &CandidateSet, c: f64, floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = set.candidates.first().ok_or(Error::EmptyEnsemble)?;
    if !(c >= 1.0) {
        return Err(Error::InvalidProblem(format!("bound factor must be >= 1, got {c}")));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidProblem("bound floor must be positive".into()));
    }
    let mut mb = vec![0.0f64; first.beta.len()];
    let mut mp = vec![0.0f64; first.residuals.len()];
    for cand in &set.candidates {
        if cand.beta.len() != mb.len() || cand.residuals.len() != mp.len() {
            return Err(Error::DimensionMismatch("candidates differ in shape".into()));
        }
        for (m, b) in mb.iter_mut().zip(&cand.beta) {
            *m = m.max(b.abs());
        }
        for (m, e) in mp.iter_mut().zip(&cand.residuals) {
            *m = m.max(e.abs());
        }
    }
    let finish = |v: &mut Vec<f64>| {
        for m in v.iter_mut() {
            *m = if *m > 0.0 { *m * c } else { floor };
        }
    };
    finish(&mut mb);
    finish(&mut mp);
    Ok((mb, mp))
}

/// Default bound floor: `floor_factor` times the response MAD (1 if that is 0).
pub fn default_floor(data: &Dataset, floor_factor: f64) -> f64 {
    let s = mad(data.y());
    floor_factor * if s > 0.0 { s } else { 1.0 }
}

/// The default ensemble, merged in fixed provenance order: local search from
/// zero, local search from a ridge fit, the best random-start concentration
/// fit, and the screened start.
pub fn default_ensemble(problem: &SfsodProblem, cfg: &HeuristicConfig) -> CandidateSet {
    let p = problem.p();
    let members: [&(dyn Fn() -> Vec<f64> + Sync); 4] = [
        &|| dfo_local_search(problem, &vec![0.0; p], cfg.max_iter).beta,
        &|| dfo_local_search(problem, &ridge_init(problem), cfg.max_iter).beta,
        &|| {
            random_start_concentration(problem, cfg)
                .into_iter()
                .next()
                .map(|s| s.beta)
                .unwrap_or_else(|| vec![0.0; p])
        },
        &|| screened_concentration(problem, cfg).beta,
    ];
    let names = ["dfo-zero", "dfo-ridge", "concentration", "screened"];
    let betas: Vec<Vec<f64>> = if cfg.threads > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = members.iter().map(|f| scope.spawn(f)).collect();
            handles.into_iter().map(|h| h.join().expect("ensemble member panicked")).collect()
        })
    } else {
        members.iter().map(|f| f()).collect()
    };
    let mut set = CandidateSet::default();
    for (beta, name) in betas.into_iter().zip(names) {
        set.push(&problem.data, beta, name);
    }
    let best = set
        .candidates
        .iter()
        .map(|c| trimmed_loss(problem, &c.beta).unwrap_or(f64::INFINITY))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("nonempty ensemble");
    let polished = swap_search(problem, &set.candidates[best].beta, 20);
    set.push(&problem.data, polished.beta, "swap");
    set
}

/// Attaches ensemble big-M bounds to a problem.
pub fn with_ensemble_bounds(problem: &SfsodProblem, set: &CandidateSet, cfg: &HeuristicConfig) -> Result<SfsodProblem> {
    let floor = default_floor(&problem.data, cfg.floor_factor);
    let (mb, mp) = ensemble_bounds(set, cfg.bound_factor, floor)?;
    problem.clone().with_bigm(mb, mp)
}
