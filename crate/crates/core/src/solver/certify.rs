//! Independent feasibility check of a solution.

use serde::{Deserialize, Serialize};

use crate::linalg::dot;
use crate::model::{SfsodProblem, Solution};

/// Tolerance for box and ridge checks, relative to the bound.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub checks: Vec<ConstraintCheck>,
    /// Objective recomputed from scratch.
    pub objective: f64,
}

impl CertifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Feasibility, optionally ignoring the big-M boxes.
    pub fn feasible(&self, with_boxes: bool) -> bool {
        self.checks
            .iter()
            .filter(|c| c.name != "objective" && c.name != "gap")
            .filter(|c| with_boxes || (c.name != "beta_box" && c.name != "phi_box"))
            .all(|c| c.passed)
    }
}

/// Re-validates every constraint of the program for `solution` and recomputes
/// its objective, without using any solver state.
pub fn certify(problem: &SfsodProblem, solution: &Solution) -> CertifyReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(ConstraintCheck {
            name: name.to_string(),
            passed,
            detail,
        })
    };
    let n = problem.n();
    let p = problem.p();
    let shape_ok = solution.beta.len() == p
        && solution.phi.len() == n
        && solution.z_beta.len() == p
        && solution.z_phi.len() == n;
    push(
        "shape",
        shape_ok,
        format!(
            "beta {}, phi {}, z_beta {}, z_phi {} (want p = {p}, n = {n})",
            solution.beta.len(),
            solution.phi.len(),
            solution.z_beta.len(),
            solution.z_phi.len()
        ),
    );
    if !shape_ok {
        return CertifyReport {
            checks,
            objective: f64::NAN,
        };
    }
    let off = usize::from(problem.intercept());

    let bad_beta: Vec<usize> = (off..p)
        .filter(|&j| !solution.z_beta[j] && solution.beta[j] != 0.0)
        .collect();
    push("beta_support", bad_beta.is_empty(), format!("nonzero with z = 0 at {bad_beta:?}"));
    let intercept_z = off == 1 && solution.z_beta[0];
    push("intercept_indicator", !intercept_z, "intercept has no indicator".into());
    let kb = solution.z_beta[off..].iter().filter(|&&z| z).count();
    push("beta_cardinality", kb <= problem.k_p, format!("{kb} active, k_p = {}", problem.k_p));

    let bad_phi: Vec<usize> = (0..n)
        .filter(|&i| !solution.z_phi[i] && solution.phi[i] != 0.0)
        .collect();
    push("phi_support", bad_phi.is_empty(), format!("nonzero with z = 0 at {bad_phi:?}"));
    let kc = solution.z_phi.iter().filter(|&&z| z).count();
    push("phi_cardinality", kc <= problem.k_n, format!("{kc} trimmed, k_n = {}", problem.k_n));

    let r2: f64 = solution.beta[off..].iter().map(|b| b * b).sum();
    let ridge_ok = !problem.ridge_active() || r2 <= problem.lambda * (1.0 + FEAS_TOL) + f64::MIN_POSITIVE;
    push("ridge", ridge_ok, format!("sum of squares {r2:e}, lambda {:e}", problem.lambda));

    if let (Some(mb), Some(mp)) = (&problem.bigm_beta, &problem.bigm_phi) {
        let over_b: Vec<usize> = (off..p)
            .filter(|&j| solution.beta[j].abs() > mb[j] * (1.0 + FEAS_TOL))
            .collect();
        push("beta_box", over_b.is_empty(), format!("outside box at {over_b:?}"));
        let over_p: Vec<usize> = (0..n)
            .filter(|&i| solution.phi[i].abs() > mp[i] * (1.0 + FEAS_TOL))
            .collect();
        push("phi_box", over_p.is_empty(), format!("outside box at {over_p:?}"));
    }

    let data = &problem.data;
    let mut s = 0.0;
    for i in 0..n {
        let r = data.y()[i] - dot(data.x().row(i), &solution.beta) - solution.phi[i];
        s += r * r;
    }
    let obj = s / n as f64;
    let obj_ok = (obj - solution.objective).abs() <= 1e-10 * obj.abs().max(1.0);
    push("objective", obj_ok, format!("recomputed {obj:e}, reported {:e}", solution.objective));
    let gap_ok = solution.gap >= 0.0 && solution.lower_bound <= solution.objective * (1.0 + 1e-12) + 1e-300;
    push("gap", gap_ok, format!("lower bound {:e}, gap {:e}", solution.lower_bound, solution.gap));

    CertifyReport { checks, objective: obj }
}
