//! Fixtures shared by the criterion benchmarks in `benches/`.

use sfsod::pipeline::prepare;
use sfsod::simulation::{generate_scenario, ScenarioConfig};
use sfsod::SfsodProblem;

/// A standardized problem drawn from the contaminated simulation design, with
/// the true budgets.
pub fn planted_problem(n: usize, p: usize, p0: usize, seed: u64) -> SfsodProblem {
    let sc = ScenarioConfig {
        n,
        p,
        p0,
        seed,
        ..Default::default()
    };
    let s = generate_scenario(&sc, 0).expect("valid scenario");
    prepare(&s.train, p0 - 1, sc.n_outliers(), f64::INFINITY, false).expect("well-posed problem")
}
