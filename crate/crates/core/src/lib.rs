//! Sparse robust linear regression by mixed-integer quadratic programming.
//!
//! The crate selects at most `k_p` features and trims at most `k_n` cases in a
//! single optimization, and certifies the result with a branch-and-bound
//! optimality gap. Around the solver sit heuristic warm starts and big-M
//! bound construction ([`heuristics`]), data-driven choice of both budgets
//! ([`tuning`]) and a simulation harness ([`simulation`]).

pub mod error;
pub mod fit;
pub mod heuristics;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod qp;
pub mod rng;
pub mod robust;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{
    objective, optimal_phi_given_beta, trimmed_loss, Dataset, SfsodProblem, Solution,
    SolveStatus, Standardization,
};
pub use oracle::{deletion_residuals, robust_oracle_fit, OracleFit};
