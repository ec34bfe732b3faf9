//! Branch-and-bound for the sparse trimmed regression program.
//!
//! Nodes fix indicators to 0 or 1 and are explored best-bound first, deeper
//! nodes first on ties and then in creation order. Each node gets a lower
//! bound from `bound` and, optionally, a feasible completion that may
//! improve the incumbent. A node whose free indicators all fit within the
//! remaining budgets is solved exactly and closed.

mod bound;
mod certify;
mod lp;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::fit_support;
use crate::model::{gap, objective, SfsodProblem, Solution, SolveStatus};

pub use bound::BranchTarget;
pub use certify::{certify, CertifyReport, ConstraintCheck};
pub use lp::{export_lp, write_lp};

use bound::{evaluate, BoundContext, NodeEval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Largest magnitude in the relaxation point.
    MaxMagnitude,
    /// Largest bound increase if the index were forced the other way.
    MostViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    /// Big-M boxes are constraints; nodes also solve the box relaxation.
    #[serde(rename = "bigm")]
    BigM,
    /// Indicator dichotomy only; big-M vectors are ignored.
    Sos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gap_tol: f64,
    /// Seconds; `None` for no limit.
    pub time_limit: Option<f64>,
    pub node_limit: Option<u64>,
    pub branching_rule: BranchRule,
    pub bound_mode: BoundMode,
    pub thread_count: usize,
    pub seed: u64,
    /// Iterations of the box-relaxation solver per node (big-M mode).
    pub qp_iters: usize,
    /// Try a feasible completion at every open node.
    pub node_heuristic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap_tol: 1e-6,
            time_limit: None,
            node_limit: None,
            branching_rule: BranchRule::MaxMagnitude,
            bound_mode: BoundMode::BigM,
            thread_count: 1,
            seed: 0,
            qp_iters: 200,
            node_heuristic: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol >= 0.0) {
            return Err(Error::config("gap_tol", "must be nonnegative"));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::config("time_limit", "must be positive"));
            }
        }
        if self.node_limit == Some(0) {
            return Err(Error::config("node_limit", "must be positive"));
        }
        if self.thread_count == 0 {
            return Err(Error::config("thread_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Branching state: indicators fixed to one (`fixed_in_*`) or zero (`fixed_out_*`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BnbNode {
    pub fixed_in_beta: Vec<usize>,
    pub fixed_out_beta: Vec<usize>,
    pub fixed_in_phi: Vec<usize>,
    pub fixed_out_phi: Vec<usize>,
    pub bound: f64,
    pub depth: usize,
}

impl BnbNode {
    pub fn root() -> Self {
        BnbNode::default()
    }

    fn check(&self, problem: &SfsodProblem) -> Result<()> {
        let p = problem.p();
        let n = problem.n();
        let feats = self.fixed_in_beta.iter().chain(&self.fixed_out_beta);
        if feats.clone().any(|&j| j >= p || (problem.intercept() && j == 0)) {
            return Err(Error::InvalidProblem("fixed feature index out of range".into()));
        }
        if self.fixed_in_phi.iter().chain(&self.fixed_out_phi).any(|&i| i >= n) {
            return Err(Error::InvalidProblem("fixed case index out of range".into()));
        }
        if self.fixed_in_beta.iter().any(|j| self.fixed_out_beta.contains(j))
            || self.fixed_in_phi.iter().any(|i| self.fixed_out_phi.contains(i))
        {
            return Err(Error::Infeasible("an index is fixed both in and out".into()));
        }
        if self.fixed_in_beta.len() > problem.k_p {
            return Err(Error::Infeasible(format!(
                "{} features forced in with k_p = {}",
                self.fixed_in_beta.len(),
                problem.k_p
            )));
        }
        if self.fixed_in_phi.len() > problem.k_n {
            return Err(Error::Infeasible(format!(
                "{} cases forced out of the fit with k_n = {}",
                self.fixed_in_phi.len(),
                problem.k_n
            )));
        }
        Ok(())
    }
}

/// Splits `node` on `target`. The first child fixes the indicator to zero,
/// the second to one. Under either bound mode this is the dichotomy
/// "variable is zero" versus "variable is active and uses budget".
pub fn branch(problem: &SfsodProblem, node: &BnbNode, target: BranchTarget) -> Result<(BnbNode, BnbNode)> {
    let undecided = |v: usize, a: &[usize], b: &[usize]| !a.contains(&v) && !b.contains(&v);
    let mut zero = node.clone();
    let mut one = node.clone();
    zero.depth += 1;
    one.depth += 1;
    match target {
        BranchTarget::Feature(j) => {
            if j >= problem.p()
                || (problem.intercept() && j == 0)
                || !undecided(j, &node.fixed_in_beta, &node.fixed_out_beta)
            {
                return Err(Error::NoUndecided);
            }
            insert_sorted(&mut zero.fixed_out_beta, j);
            insert_sorted(&mut one.fixed_in_beta, j);
        }
        BranchTarget::Case(i) => {
            if i >= problem.n() || !undecided(i, &node.fixed_in_phi, &node.fixed_out_phi) {
                return Err(Error::NoUndecided);
            }
            insert_sorted(&mut zero.fixed_out_phi, i);
            insert_sorted(&mut one.fixed_in_phi, i);
        }
    }
    Ok((zero, one))
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    let pos = v.partition_point(|&y| y < x);
    v.insert(pos, x);
}

/// Lower bound of `node` under `config`'s bound mode; `+∞` if infeasible.
pub fn node_relax_bound(problem: &SfsodProblem, node: &BnbNode, config: &SolverConfig) -> f64 {
    let ctx = context(problem, config, false);
    match evaluate(problem, node, &ctx, None) {
        NodeEval::Infeasible => f64::INFINITY,
        NodeEval::Leaf(fit) => fit.objective,
        NodeEval::Open { bound, .. } => bound,
    }
}

/// The branching choice the solver would make at `node` (without incumbent).
pub fn branching_target(problem: &SfsodProblem, node: &BnbNode, config: &SolverConfig) -> Result<BranchTarget> {
    let ctx = context(problem, config, false);
    match evaluate(problem, node, &ctx, None) {
        NodeEval::Open { target, .. } => Ok(target),
        _ => Err(Error::NoUndecided),
    }
}

fn context(problem: &SfsodProblem, config: &SolverConfig, heuristic: bool) -> BoundContext {
    let qp_lipschitz = if config.bound_mode == BoundMode::BigM && problem.has_bigm() {
        let s = problem.data.x().gram_spectral_norm(1e-6, 1000).sqrt();
        // Gradient Lipschitz constant of (1/n)‖P(y − [X, I]v)‖², with slack for the estimate.
        2.0 * (s + 1.0).powi(2) / problem.n() as f64 * 1.01
    } else {
        1.0
    };
    BoundContext {
        mode: config.bound_mode,
        rule: config.branching_rule,
        qp_lipschitz,
        qp_iters: config.qp_iters,
        heuristic_completion: heuristic,
    }
}

struct Entry {
    bound: f64,
    depth: usize,
    id: u64,
    node: BnbNode,
    target: BranchTarget,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Max-heap: smallest bound, then deepest, then oldest comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    beta: Vec<f64>,
    phi: Vec<f64>,
    objective: f64,
}

struct Shared {
    heap: BinaryHeap<Entry>,
    incumbent: Option<Incumbent>,
    next_id: u64,
    nodes: u64,
    /// Nodes popped but not yet finished by a worker.
    busy: usize,
    /// Set once a limit is hit.
    stop: Option<SolveStatus>,
}

impl Shared {
    fn offer(&mut self, beta: Vec<f64>, phi: Vec<f64>, obj: f64) {
        if obj.is_finite() && self.incumbent.as_ref().is_none_or(|inc| obj < inc.objective) {
            self.incumbent = Some(Incumbent {
                beta,
                phi,
                objective: obj,
            });
        }
    }

    fn upper(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.objective)
    }
}

fn prunable(bound: f64, upper: f64, gap_tol: f64) -> bool {
    if !bound.is_finite() {
        return true;
    }
    if !upper.is_finite() {
        return false;
    }
    bound >= upper || (upper - bound) / upper.max(1e-12) <= gap_tol
}

/// Solves from the root node.
pub fn solve(problem: &SfsodProblem, config: &SolverConfig, warm_starts: &[Solution]) -> Result<Solution> {
    solve_from(problem, config, warm_starts, BnbNode::root())
}

/// Solves the subproblem below `root`.
pub fn solve_from(
    problem: &SfsodProblem,
    config: &SolverConfig,
    warm_starts: &[Solution],
    root: BnbNode,
) -> Result<Solution> {
    let start = Instant::now();
    problem.validate()?;
    config.validate()?;
    root.check(problem)?;
    let respect_bigm = config.bound_mode == BoundMode::BigM && problem.has_bigm();
    let deadline = config.time_limit.map(|t| start + Duration::from_secs_f64(t));

    let mut shared = Shared {
        heap: BinaryHeap::new(),
        incumbent: None,
        next_id: 0,
        nodes: 0,
        busy: 0,
        stop: None,
    };
    for ws in warm_starts {
        if ws.beta.len() != problem.p() || ws.phi.len() != problem.n() {
            return Err(Error::DimensionMismatch("warm start has wrong shape".into()));
        }
        if !consistent_with(problem, &root, ws) {
            continue;
        }
        let feats = ws.feature_support();
        let cases = ws.case_support();
        let refit = fit_support(problem, &feats, &cases, respect_bigm);
        shared.offer(refit.beta, refit.phi, refit.objective);
        if certify(problem, ws).feasible(respect_bigm) {
            let obj = objective(problem, &ws.beta, &ws.phi)?;
            shared.offer(ws.beta.clone(), ws.phi.clone(), obj);
        }
    }

    let ctx = context(problem, config, config.node_heuristic);
    process(problem, config, &ctx, &mut shared, root, None);

    let shared = if config.thread_count <= 1 {
        let mut sh = shared;
        while let Some(entry) = next_entry(&mut sh, config, deadline) {
            sh.busy += 1;
            let children = expand(problem, &entry);
            for child in children {
                process(problem, config, &ctx, &mut sh, child, Some(entry.bound));
            }
            sh.busy -= 1;
        }
        sh
    } else {
        let cell = (Mutex::new(shared), Condvar::new());
        std::thread::scope(|scope| {
            for _ in 0..config.thread_count {
                scope.spawn(|| worker(problem, config, &ctx, &cell, deadline));
            }
        });
        cell.0.into_inner().expect("solver state poisoned")
    };

    let Shared {
        heap,
        incumbent,
        nodes,
        stop,
        ..
    } = shared;
    let inc = incumbent.ok_or_else(|| Error::Infeasible("no feasible completion of the root node".into()))?;
    let open_lb = heap.iter().map(|e| e.bound).fold(f64::INFINITY, f64::min);
    let lower = open_lb.min(inc.objective);
    let status = match stop {
        Some(s) if !heap.is_empty() => s,
        _ => SolveStatus::Optimal,
    };
    let mut sol = Solution::from_point(problem, inc.beta, inc.phi)?;
    sol.objective = inc.objective;
    sol.lower_bound = lower;
    sol.gap = gap(inc.objective, lower);
    sol.nodes_explored = nodes;
    sol.wall_time = start.elapsed().as_secs_f64();
    sol.status = status;
    Ok(sol)
}

fn consistent_with(problem: &SfsodProblem, root: &BnbNode, ws: &Solution) -> bool {
    root.fixed_in_beta.iter().all(|&j| ws.z_beta[j])
        && root.fixed_out_beta.iter().all(|&j| !ws.z_beta[j])
        && root.fixed_in_phi.iter().all(|&i| ws.z_phi[i])
        && root.fixed_out_phi.iter().all(|&i| !ws.z_phi[i])
        && ws.feature_support().len() <= problem.k_p
        && ws.case_support().len() <= problem.k_n
}

/// Pops the next node worth expanding, or `None` when the search is over.
fn next_entry(sh: &mut Shared, config: &SolverConfig, deadline: Option<Instant>) -> Option<Entry> {
    if sh.stop.is_some() {
        return None;
    }
    if deadline.is_some_and(|d| Instant::now() >= d) {
        sh.stop = Some(SolveStatus::TimeLimit);
        return None;
    }
    if config.node_limit.is_some_and(|l| sh.nodes >= l) {
        sh.stop = Some(SolveStatus::NodeLimit);
        return None;
    }
    let entry = sh.heap.pop()?;
    if prunable(entry.bound, sh.upper(), config.gap_tol) {
        // Best-first order: every remaining node is at least as bad.
        sh.heap.clear();
        return None;
    }
    Some(entry)
}

fn expand(problem: &SfsodProblem, entry: &Entry) -> Vec<BnbNode> {
    match branch(problem, &entry.node, entry.target) {
        Ok((zero, one)) => vec![zero, one],
        Err(_) => Vec::new(),
    }
}

/// Evaluates `node`, updates the incumbent and queues it if still open.
fn process(
    problem: &SfsodProblem,
    config: &SolverConfig,
    ctx: &BoundContext,
    sh: &mut Shared,
    node: BnbNode,
    parent_bound: Option<f64>,
) {
    let inc_beta = sh.incumbent.as_ref().map(|i| i.beta.clone());
    let eval = evaluate(problem, &node, ctx, inc_beta.as_deref());
    record(problem, config, sh, node, parent_bound, eval);
}

fn record(
    _problem: &SfsodProblem,
    config: &SolverConfig,
    sh: &mut Shared,
    mut node: BnbNode,
    parent_bound: Option<f64>,
    eval: NodeEval,
) {
    sh.nodes += 1;
    match eval {
        NodeEval::Infeasible => {}
        NodeEval::Leaf(fit) => sh.offer(fit.beta, fit.phi, fit.objective),
        NodeEval::Open {
            bound,
            target,
            completion,
        } => {
            if let Some(fit) = completion {
                sh.offer(fit.beta, fit.phi, fit.objective);
            }
            let bound = parent_bound.map_or(bound, |pb| bound.max(pb));
            node.bound = bound;
            if !prunable(bound, sh.upper(), config.gap_tol) {
                let id = sh.next_id;
                sh.next_id += 1;
                sh.heap.push(Entry {
                    bound,
                    depth: node.depth,
                    id,
                    node,
                    target,
                });
            }
        }
    }
}

fn worker(
    problem: &SfsodProblem,
    config: &SolverConfig,
    ctx: &BoundContext,
    cell: &(Mutex<Shared>, Condvar),
    deadline: Option<Instant>,
) {
    let (lock, cvar) = cell;
    loop {
        let (entry, inc_beta) = {
            let mut sh = lock.lock().expect("solver state poisoned");
            loop {
                if sh.heap.is_empty() && sh.busy > 0 && sh.stop.is_none() {
                    sh = cvar.wait(sh).expect("solver state poisoned");
                    continue;
                }
                break;
            }
            match next_entry(&mut sh, config, deadline) {
                Some(e) => {
                    sh.busy += 1;
                    let b = sh.incumbent.as_ref().map(|i| i.beta.clone());
                    (e, b)
                }
                None => {
                    cvar.notify_all();
                    return;
                }
            }
        };
        let children = expand(problem, &entry);
        let evals: Vec<(BnbNode, NodeEval)> = children
            .into_iter()
            .map(|c| {
                let ev = evaluate(problem, &c, ctx, inc_beta.as_deref());
                (c, ev)
            })
            .collect();
        let mut sh = lock.lock().expect("solver state poisoned");
        for (c, ev) in evals {
            record(problem, config, &mut sh, c, Some(entry.bound), ev);
        }
        sh.busy -= 1;
        cvar.notify_all();
    }
}
