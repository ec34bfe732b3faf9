mod common;

use common::{enumerate_optimum, random_problem};
use sfsod::heuristics::{default_ensemble, with_ensemble_bounds, HeuristicConfig};
use sfsod::solver::{certify, node_relax_bound, solve, BnbNode, BoundMode, BranchRule, SolverConfig};

fn exact(mode: BoundMode, rule: BranchRule) -> SolverConfig {
    SolverConfig {
        gap_tol: 0.0,
        bound_mode: mode,
        branching_rule: rule,
        ..Default::default()
    }
}

#[test]
fn solve_matches_enumeration_sos() {
    for seed in 0..40u64 {
        let n = 8 + (seed % 5) as usize;
        let p = 3 + (seed % 6) as usize;
        let k_p = 1 + (seed % 3) as usize;
        let k_n = (seed % 3) as usize;
        let pb = random_problem(seed, n, p, k_p.min(p - 1), k_n);
        let (opt, _, _) = enumerate_optimum(&pb);
        let rule = if seed % 2 == 0 { BranchRule::MaxMagnitude } else { BranchRule::MostViolated };
        let sol = solve(&pb, &exact(BoundMode::Sos, rule), &[]).unwrap();
        assert!((sol.objective - opt).abs() <= 1e-8, "seed {seed}: {} vs {opt}", sol.objective);
        assert!(certify(&pb, &sol).all_passed());
        assert!(sol.lower_bound <= opt + 1e-9);
    }
}

#[test]
fn root_bound_below_optimum() {
    for seed in 100..160u64 {
        let pb = random_problem(seed, 10, 6, 2, 2);
        let (opt, _, _) = enumerate_optimum(&pb);
        for mode in [BoundMode::Sos, BoundMode::BigM] {
            let pbm = pb.clone().with_bigm(vec![1e3; 6], vec![1e3; 10]).unwrap();
            let b = node_relax_bound(&pbm, &BnbNode::root(), &exact(mode, BranchRule::MaxMagnitude));
            assert!(b <= opt + 1e-10, "seed {seed} {mode:?}: {b} > {opt}");
        }
    }
}

#[test]
fn ensemble_bounds_preserve_optimum() {
    for seed in 200..230u64 {
        let pb = random_problem(seed, 11, 5, 2, 2);
        let (opt, _, _) = enumerate_optimum(&pb);
        let cfg = HeuristicConfig {
            n_starts: 100,
            ..Default::default()
        };
        let set = default_ensemble(&pb, &cfg);
        let bounded = with_ensemble_bounds(&pb, &set, &cfg).unwrap();
        let sol = solve(&bounded, &exact(BoundMode::BigM, BranchRule::MaxMagnitude), &set.warm_starts(&bounded)).unwrap();
        // Bounded solves can only be worse; they agree whenever the optimum lies in the boxes.
        assert!(sol.objective >= opt - 1e-8, "seed {seed}");
        let mb = bounded.bigm_beta.as_ref().unwrap();
        let free = solve(&pb, &exact(BoundMode::Sos, BranchRule::MaxMagnitude), &[]).unwrap();
        let inside = free.beta.iter().zip(mb).skip(1).all(|(b, m)| b.abs() <= *m)
            && free.phi.iter().zip(bounded.bigm_phi.as_ref().unwrap()).all(|(f, m)| f.abs() <= *m);
        if inside {
            assert!((sol.objective - opt).abs() <= 1e-8, "seed {seed}: {} vs {opt}", sol.objective);
        }
    }
}
