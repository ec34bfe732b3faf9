//! Node relaxations.
//!
//! Two lower bounds are available at a node. The least-squares bound keeps
//! every undecided feature and frees the shift of every undecided case, which
//! leaves an ordinary least-squares problem on the forced-retained cases; it is
//! then tightened with the cheapest single-case addition and single-feature
//! deletion the budgets force. In big-M mode the box relaxation (indicators
//! relaxed to `[0, 1]`) is also solved approximately by accelerated projected
//! gradient, and a Frank–Wolfe dual value turns any iterate into a valid bound.

use crate::fit::{fit_support, SupportFit};
use crate::linalg::{dot, least_squares};
use crate::model::SfsodProblem;
use crate::qp::project_weighted_l1_box;

use super::{BnbNode, BoundMode, BranchRule};

/// Decision state of one indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fix {
    Free,
    /// Feature active / case trimmed.
    In,
    /// Feature zero / case retained.
    Out,
}

/// Expanded node state.
pub(crate) struct NodeState {
    pub feat: Vec<Fix>,
    pub case: Vec<Fix>,
    pub kp_rem: usize,
    pub kn_rem: usize,
}

impl NodeState {
    /// Expands a node, applying the forced consequences of exhausted budgets.
    /// Returns `None` when the node is infeasible.
    pub fn new(problem: &SfsodProblem, node: &BnbNode) -> Option<Self> {
        let mut feat = vec![Fix::Free; problem.p()];
        if problem.intercept() {
            feat[0] = Fix::In;
        }
        let mut case = vec![Fix::Free; problem.n()];
        for &j in &node.fixed_in_beta {
            feat[j] = Fix::In;
        }
        for &j in &node.fixed_out_beta {
            if feat[j] == Fix::In {
                return None;
            }
            feat[j] = Fix::Out;
        }
        for &i in &node.fixed_in_phi {
            case[i] = Fix::In;
        }
        for &i in &node.fixed_out_phi {
            if case[i] == Fix::In {
                return None;
            }
            case[i] = Fix::Out;
        }
        let n_in_f = problem.data.selectable().filter(|&j| feat[j] == Fix::In).count();
        let n_in_c = case.iter().filter(|&&c| c == Fix::In).count();
        if n_in_f > problem.k_p || n_in_c > problem.k_n {
            return None;
        }
        let kp_rem = problem.k_p - n_in_f;
        let kn_rem = problem.k_n - n_in_c;
        if kp_rem == 0 {
            feat.iter_mut().filter(|f| **f == Fix::Free).for_each(|f| *f = Fix::Out);
        }
        if kn_rem == 0 {
            case.iter_mut().filter(|c| **c == Fix::Free).for_each(|c| *c = Fix::Out);
        }
        Some(NodeState {
            feat,
            case,
            kp_rem,
            kn_rem,
        })
    }

    pub fn free_features(&self) -> Vec<usize> {
        (0..self.feat.len()).filter(|&j| self.feat[j] == Fix::Free).collect()
    }

    pub fn free_cases(&self) -> Vec<usize> {
        (0..self.case.len()).filter(|&i| self.case[i] == Fix::Free).collect()
    }

    /// True when taking every free feature and trimming every free case stays
    /// within budget. The objective is monotone in both supports, so that
    /// completion is optimal for the node.
    pub fn is_leaf(&self) -> bool {
        self.free_features().len() <= self.kp_rem && self.free_cases().len() <= self.kn_rem
    }

    /// Non-intercept features that are in or free.
    pub fn open_features(&self, problem: &SfsodProblem) -> Vec<usize> {
        problem
            .data
            .selectable()
            .filter(|&j| self.feat[j] != Fix::Out)
            .collect()
    }

    pub fn open_cases(&self) -> Vec<usize> {
        (0..self.case.len()).filter(|&i| self.case[i] != Fix::Out).collect()
    }
}

/// What to split next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchTarget {
    Feature(usize),
    Case(usize),
}

/// Outcome of evaluating one node.
pub(crate) enum NodeEval {
    Infeasible,
    /// All indicators effectively decided; carries the exact restricted fit.
    Leaf(SupportFit),
    Open {
        bound: f64,
        target: BranchTarget,
        /// Feasible completion built from the relaxation.
        completion: Option<SupportFit>,
    },
}

pub(crate) struct BoundContext {
    pub mode: BoundMode,
    pub rule: BranchRule,
    /// Lipschitz constant of the relaxed quadratic's gradient (big-M mode).
    pub qp_lipschitz: f64,
    pub qp_iters: usize,
    pub heuristic_completion: bool,
}

pub(crate) fn evaluate(
    problem: &SfsodProblem,
    node: &BnbNode,
    ctx: &BoundContext,
    incumbent_beta: Option<&[f64]>,
) -> NodeEval {
    let Some(st) = NodeState::new(problem, node) else {
        return NodeEval::Infeasible;
    };
    let respect_bigm = ctx.mode == BoundMode::BigM && problem.has_bigm();
    if st.is_leaf() {
        let fit = fit_support(problem, &st.open_features(problem), &st.open_cases(), respect_bigm);
        return NodeEval::Leaf(fit);
    }

    let data = &problem.data;
    let n = problem.n();
    let nf = n as f64;
    let free_f = st.free_features();
    let free_c = st.free_cases();
    let excess_f = free_f.len().saturating_sub(st.kp_rem);
    let excess_c = free_c.len().saturating_sub(st.kn_rem);

    let mut cols: Vec<usize> = Vec::new();
    if problem.intercept() {
        cols.push(0);
    }
    cols.extend(st.open_features(problem));
    let kept: Vec<usize> = (0..n).filter(|&i| st.case[i] == Fix::Out).collect();
    let ls = least_squares(data.x(), data.y(), &kept, &cols);
    let mut rss_bound = ls.rss;

    let mut coef_full = vec![0.0; problem.p()];
    for (&c, b) in cols.iter().zip(&ls.coef) {
        coef_full[c] = *b;
    }
    let resid = data.residuals(&coef_full);
    // Per-index scores for branching, in RSS units when the fit is full rank.
    let mut feat_score: Vec<(usize, f64)> = Vec::new();
    let mut case_score: Vec<(usize, f64)> = Vec::new();

    let full_rank = ls.full_rank() && ls.chol.is_some() && kept.len() > cols.len();
    if full_rank {
        let chol = ls.chol.as_ref().unwrap();
        let mut buf = Vec::with_capacity(cols.len());
        for &i in &free_c {
            buf.clear();
            buf.extend(cols.iter().map(|&c| data.x().get(i, c)));
            let h = chol.quad_inv(&buf);
            case_score.push((i, resid[i] * resid[i] / (1.0 + h)));
        }
        let inv_diag = chol.inverse_diag();
        for &j in &free_f {
            let k = cols.iter().position(|&c| c == j).unwrap();
            feat_score.push((j, coef_full[j] * coef_full[j] / inv_diag[k]));
        }
        let kth = |scores: &[(usize, f64)], k: usize| -> f64 {
            if k == 0 {
                return 0.0;
            }
            let mut v: Vec<f64> = scores.iter().map(|s| s.1).collect();
            v.sort_by(f64::total_cmp);
            v[k - 1]
        };
        let inc = kth(&case_score, excess_c).max(kth(&feat_score, excess_f));
        rss_bound += inc;
    } else {
        for &i in &free_c {
            case_score.push((i, resid[i].abs()));
        }
        for &j in &free_f {
            feat_score.push((j, coef_full[j].abs()));
        }
    }
    let mut bound = rss_bound / nf;

    if respect_bigm {
        let qb = box_relaxation_bound(problem, &st, ctx);
        bound = bound.max(qb);
    }

    // Branching choice.
    let target = choose_target(
        ctx.rule,
        full_rank,
        &coef_full,
        &resid,
        &feat_score,
        &case_score,
        excess_f,
        excess_c,
        incumbent_beta.map(|b| (b, data.residuals(b))),
    );

    let completion = if ctx.heuristic_completion {
        Some(complete(problem, &st, &coef_full, respect_bigm))
    } else {
        None
    };
    NodeEval::Open {
        bound,
        target,
        completion,
    }
}

#[allow(clippy::too_many_arguments)]
fn choose_target(
    rule: BranchRule,
    full_rank: bool,
    coef: &[f64],
    resid: &[f64],
    feat_score: &[(usize, f64)],
    case_score: &[(usize, f64)],
    excess_f: usize,
    excess_c: usize,
    incumbent: Option<(&[f64], Vec<f64>)>,
) -> BranchTarget {
    let argmax = |v: &[(usize, f64)]| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &(i, s) in v {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best
    };
    // Without a full-rank relaxation the magnitudes are not informative; the
    // incumbent's residuals and coefficients guide the split instead.
    let (fs, cs): (Vec<(usize, f64)>, Vec<(usize, f64)>) = match (&incumbent, full_rank) {
        (Some((b, r)), false) => (
            feat_score.iter().map(|&(j, _)| (j, b[j].abs())).collect(),
            case_score.iter().map(|&(i, _)| (i, r[i].abs())).collect(),
        ),
        _ => match rule {
            BranchRule::MaxMagnitude => (
                feat_score.iter().map(|&(j, _)| (j, coef[j].abs())).collect(),
                case_score.iter().map(|&(i, _)| (i, resid[i].abs())).collect(),
            ),
            BranchRule::MostViolated => (feat_score.to_vec(), case_score.to_vec()),
        },
    };
    let f = if excess_f > 0 { argmax(&fs) } else { None };
    let c = if excess_c > 0 { argmax(&cs) } else { None };
    match (f, c) {
        (Some((j, sf)), Some((i, sc))) => {
            // Only the most-violated scores share units; otherwise cases first.
            if rule == BranchRule::MostViolated && full_rank && sf > sc {
                BranchTarget::Feature(j)
            } else {
                BranchTarget::Case(i)
            }
        }
        (Some((j, _)), None) => BranchTarget::Feature(j),
        (None, Some((i, _))) => BranchTarget::Case(i),
        (None, None) => {
            // Not a leaf, so some group has an excess; fall back to the first free index.
            if let Some(&(j, _)) = feat_score.first().filter(|_| excess_f > 0) {
                BranchTarget::Feature(j)
            } else {
                BranchTarget::Case(case_score[0].0)
            }
        }
    }
}

/// A feasible point of the node: keep the largest free coefficients, trim the
/// largest free residuals, refit, and re-trim once more.
fn complete(problem: &SfsodProblem, st: &NodeState, coef: &[f64], respect_bigm: bool) -> SupportFit {
    let data = &problem.data;
    let mut features: Vec<usize> = problem.data.selectable().filter(|&j| st.feat[j] == Fix::In).collect();
    let free_f = st.free_features();
    let mags: Vec<f64> = free_f.iter().map(|&j| coef[j]).collect();
    for k in crate::robust::top_k_abs(&mags, st.kp_rem) {
        features.push(free_f[k]);
    }
    features.sort_unstable();
    let forced: Vec<usize> = (0..problem.n()).filter(|&i| st.case[i] == Fix::In).collect();
    let free_c = st.free_cases();
    let trim_from = |beta: &[f64]| -> Vec<usize> {
        let e = data.residuals(beta);
        let mags: Vec<f64> = free_c.iter().map(|&i| e[i]).collect();
        let mut t = forced.clone();
        t.extend(crate::robust::top_k_abs(&mags, st.kn_rem).into_iter().map(|k| free_c[k]));
        t.sort_unstable();
        t
    };
    let mut trimmed = trim_from(coef);
    let mut fit = fit_support(problem, &features, &trimmed, respect_bigm);
    for _ in 0..2 {
        let next = trim_from(&fit.beta);
        if next == trimmed {
            break;
        }
        let cand = fit_support(problem, &features, &next, respect_bigm);
        if cand.objective >= fit.objective {
            break;
        }
        trimmed = next;
        fit = cand;
    }
    fit
}

/// Lower bound from the continuous relaxation of the big-M formulation.
///
/// The intercept is profiled out by centering. Variables are the open
/// non-intercept coefficients and the shifts of open cases, each in its box,
/// with the free ones additionally under the relaxed cardinality budget
/// `Σ |v| / M ≤ remaining budget`. The ridge ball is dropped.
fn box_relaxation_bound(problem: &SfsodProblem, st: &NodeState, ctx: &BoundContext) -> f64 {
    let data = &problem.data;
    let n = problem.n();
    let nf = n as f64;
    let mb = problem.bigm_beta.as_ref().unwrap();
    let mp = problem.bigm_phi.as_ref().unwrap();
    let feats = st.open_features(problem);
    let cases = st.open_cases();
    let nb = feats.len();
    let nv = nb + cases.len();
    // Variable blocks: boxed-only (decided in) and budgeted (free).
    let m: Vec<f64> = feats.iter().map(|&j| mb[j]).chain(cases.iter().map(|&i| mp[i])).collect();
    let free: Vec<bool> = feats
        .iter()
        .map(|&j| st.feat[j] == Fix::Free)
        .chain(cases.iter().map(|&i| st.case[i] == Fix::Free))
        .collect();
    let free_f_idx: Vec<usize> = (0..nb).filter(|&k| free[k]).collect();
    let free_c_idx: Vec<usize> = (nb..nv).filter(|&k| free[k]).collect();

    let center = problem.intercept();
    let f_and_grad = |v: &[f64], g: &mut [f64]| -> f64 {
        let mut r: Vec<f64> = (0..n)
            .map(|i| {
                let row = data.x().row(i);
                let mut s = data.y()[i];
                for (k, &j) in feats.iter().enumerate() {
                    s -= row[j] * v[k];
                }
                s
            })
            .collect();
        for (k, &i) in cases.iter().enumerate() {
            r[i] -= v[nb + k];
        }
        if center {
            let mu = r.iter().sum::<f64>() / nf;
            r.iter_mut().for_each(|x| *x -= mu);
        }
        for (k, &j) in feats.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                s += data.x().get(i, j) * r[i];
            }
            g[k] = -2.0 * s / nf;
        }
        for (k, &i) in cases.iter().enumerate() {
            g[nb + k] = -2.0 * r[i] / nf;
        }
        dot(&r, &r) / nf
    };
    let project = |v: &mut [f64]| {
        for k in 0..nv {
            if !free[k] {
                v[k] = v[k].clamp(-m[k], m[k]);
            }
        }
        for (idx, budget) in [(&free_f_idx, st.kp_rem), (&free_c_idx, st.kn_rem)] {
            if idx.is_empty() {
                continue;
            }
            let mut sub: Vec<f64> = idx.iter().map(|&k| v[k]).collect();
            let ms: Vec<f64> = idx.iter().map(|&k| m[k]).collect();
            project_weighted_l1_box(&mut sub, &ms, budget as f64);
            for (&k, x) in idx.iter().zip(sub) {
                v[k] = x;
            }
        }
    };
    // Frank–Wolfe dual value: f(v) + min_{s in C} gᵀ(s − v).
    let fw = |f: f64, v: &[f64], g: &[f64]| -> f64 {
        let mut lin = -dot(g, v);
        for k in 0..nv {
            if !free[k] {
                lin -= m[k] * g[k].abs();
            }
        }
        for (idx, budget) in [(&free_f_idx, st.kp_rem), (&free_c_idx, st.kn_rem)] {
            let mut w: Vec<f64> = idx.iter().map(|&k| m[k] * g[k].abs()).collect();
            w.sort_by(|a, b| b.total_cmp(a));
            lin -= w.iter().take(budget).sum::<f64>();
        }
        f + lin
    };

    let step = 1.0 / ctx.qp_lipschitz;
    let mut v = vec![0.0; nv];
    let mut w = v.clone();
    let mut t = 1.0f64;
    let mut g = vec![0.0; nv];
    let mut best = f64::NEG_INFINITY;
    for it in 0..ctx.qp_iters.max(1) {
        // Bound at the current iterate.
        let f = f_and_grad(&v, &mut g);
        best = best.max(fw(f, &v, &g));
        if f - best <= 1e-9 * f.max(1e-300) {
            break;
        }
        // Accelerated step from the extrapolated point.
        let _ = f_and_grad(&w, &mut g);
        let mut next: Vec<f64> = w.iter().zip(&g).map(|(x, gk)| x - step * gk).collect();
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        w = next.iter().zip(&v).map(|(a, b)| a + beta * (a - b)).collect();
        v = next;
        t = t_next;
        if it % 100 == 99 {
            // Restart momentum to keep the iterates monotone-ish.
            t = 1.0;
            w.clone_from(&v);
        }
    }
    best.max(0.0)
}
