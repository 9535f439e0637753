//! FTRL with 1/2-Tsallis entropy for online learning to rank under the
//! position-based click model (PBM).
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`] and [`types`]: dense matrices, problem dimensions, actions
//!   (ranked lists) and fractional allocations in the truncated Birkhoff
//!   polytope.
//! * [`polytope`]: linear minimisation over the polytope, doubly stochastic
//!   completion, positive-support matchings and the Bregman divergence.
//! * [`solver`]: the regularized-leader problem, solved by cyclic Bregman
//!   projection or by Frank-Wolfe.
//! * [`sampler`]: Birkhoff-von Neumann decomposition and action sampling.
//! * [`learner`]: the round loop (solve, sample, estimate, accumulate).
//! * [`env`]: stochastic, periodic and hard-instance loss generators.
//! * [`oracle`]: brute-force references used by tests and invariant checks.
//! * [`harness`]: experiment configuration, execution, CSV output and the
//!   invariant suites behind the `pbm` command line tool.
//!
//! Items and positions are 0-based throughout the API.

pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod matrix;
pub mod oracle;
pub mod polytope;
pub mod sampler;
pub mod solver;
pub mod tsallis;
pub mod types;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use types::{
    action_to_matrix, allocation_feasible, Action, Allocation, CumulativeLoss, EstimatedLoss,
    FeasibilityReport, LossMatrix, ProblemDims,
};

/// Feasibility tolerance for values produced by exact arithmetic.
pub const FEAS_TOL_EXACT: f64 = 1e-9;
/// Feasibility tolerance for iterates returned by the iterative solvers.
pub const FEAS_TOL_SOLVER: f64 = 1e-7;
/// Entrywise floor applied to allocations before evaluating gradients or
/// importance weights.
pub const ALLOCATION_FLOOR: f64 = 1e-8;
