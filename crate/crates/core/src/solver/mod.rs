//! The regularized-leader problem
//!
//! ```text
//! x_t = argmin_{x in Conv(X)} <x, L> + (1/eta) psi(x),   psi(x) = -sum sqrt(x)
//! ```
//!
//! solved either by cyclic Bregman projection ([`solve_cbp`]) from the
//! unconstrained minimiser, or by Frank-Wolfe ([`solve_fw`]) with the
//! assignment oracle [`crate::polytope::linmin`].

mod cbp;
mod fw;
mod linalg;
mod newton;

pub use cbp::{project_column_x1, project_rows_x2, solve_cbp};
pub use fw::solve_fw;
pub use newton::{project_unit_sum, NewtonConfig, UnitSumProjection};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{Allocation, CumulativeLoss, ProblemDims};
use crate::{tsallis, ALLOCATION_FLOOR};

/// Largest column correction the final repair may apply before the result is
/// flagged as not converged.
pub const REPAIR_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Cyclic Bregman projection.
    #[default]
    Cbp,
    /// Frank-Wolfe.
    Fw,
}

impl std::str::FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cbp" => Ok(Route::Cbp),
            "fw" => Ok(Route::Fw),
            other => Err(Error::Parse(format!("unknown solver route `{other}`"))),
        }
    }
}

/// Frank-Wolfe step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FwStep {
    /// `gamma_k = 2 / (1 + k)`, moving toward the linear-oracle vertex.
    #[default]
    OpenLoop,
    /// Pairwise steps (mass moves from the worst active vertex to the oracle
    /// vertex) with exact line search.
    Pairwise,
}

impl std::str::FromStr for FwStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "open_loop" => Ok(FwStep::OpenLoop),
            "pairwise" => Ok(FwStep::Pairwise),
            other => Err(Error::Parse(format!("unknown Frank-Wolfe step rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub route: Route,
    /// Frank-Wolfe iteration count `K`.
    pub fw_max_iters: usize,
    pub fw_step: FwStep,
    pub cbp_max_cycles: usize,
    /// Refine the CBP multipliers with projected dual Newton steps.
    pub cbp_polish: bool,
    pub newton_max_iters: usize,
    pub newton_tol: f64,
    /// Max-norm change between CBP cycles that counts as converged.
    pub convergence_tol: f64,
    /// Frank-Wolfe duality gap below which the result counts as converged.
    pub fw_gap_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            route: Route::Cbp,
            fw_max_iters: 500,
            fw_step: FwStep::OpenLoop,
            cbp_max_cycles: 200,
            cbp_polish: true,
            newton_max_iters: 50,
            newton_tol: 1e-12,
            convergence_tol: 1e-9,
            fw_gap_tol: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            max_iters: self.newton_max_iters,
            tol: self.newton_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fw_max_iters", self.fw_max_iters as f64),
            ("cbp_max_cycles", self.cbp_max_cycles as f64),
            ("newton_max_iters", self.newton_max_iters as f64),
            ("newton_tol", self.newton_tol),
            ("convergence_tol", self.convergence_tol),
            ("fw_gap_tol", self.fw_gap_tol),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(
                    format!("solver.{field}"),
                    "must be positive and finite",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Allocation,
    pub objective: f64,
    /// CBP: cycles plus dual Newton steps. FW: iterations.
    pub iterations_used: usize,
    pub converged: bool,
    /// CBP: worst constraint/complementarity violation before repair.
    /// FW: duality gap at the returned iterate.
    pub worst_kkt_residual: f64,
    /// Largest column-sum correction applied by the final repair.
    pub repair: f64,
}

/// `<x, L> - (1/eta) sum sqrt(x)`.
pub fn objective(x: &Matrix, l: &Matrix, eta: f64) -> Result<f64> {
    if x.shape() != l.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", l.rows(), l.cols()),
            actual: format!("{}x{}", x.rows(), x.cols()),
        });
    }
    if x.min_entry() < 0.0 {
        return Err(Error::Domain("objective: negative entry in x".into()));
    }
    check_eta(eta)?;
    Ok(x.as_slice()
        .iter()
        .zip(l.as_slice())
        .map(|(&xi, &li)| xi * li + tsallis::psi(xi) / eta)
        .sum())
}

/// Gradient of the objective, with `x` floored at [`ALLOCATION_FLOOR`].
pub fn objective_gradient(x: &Matrix, l: &Matrix, eta: f64) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        l[(i, j)] + tsallis::psi_grad(x[(i, j)].max(ALLOCATION_FLOOR)) / eta
    })
}

/// Unconstrained minimiser of `<x, L> + (1/eta) f(x)`, entrywise
/// `1 / (4 (1 + eta L)^2)`.
pub fn unconstrained_leader(l: &CumulativeLoss, eta: f64) -> Result<Matrix> {
    check_eta(eta)?;
    Ok(l.matrix().map(|li| {
        let d = 1.0 + eta * li;
        0.25 / (d * d)
    }))
}

/// Dispatches on `cfg.route`. `warm_start` only matters for Frank-Wolfe.
pub fn solve(
    l: &CumulativeLoss,
    eta: f64,
    cfg: &SolverConfig,
    warm_start: &Allocation,
) -> Result<SolveResult> {
    match cfg.route {
        Route::Cbp => solve_cbp(l, eta, cfg),
        Route::Fw => solve_fw(l, eta, cfg, warm_start),
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("learning rate must be positive, got {eta}")));
    }
    Ok(())
}

fn dims_of(l: &Matrix) -> Result<ProblemDims> {
    ProblemDims::new(l.rows(), l.cols())
}

/// Clamps negatives to zero and rescales each column to sum to one.
/// Returns the largest column-sum correction.
fn repair(x: &mut Matrix) -> f64 {
    for v in x.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sums = x.column_sums();
    let mut worst: f64 = 0.0;
    for (j, s) in sums.iter().enumerate() {
        worst = worst.max((s - 1.0).abs());
        if *s > 0.0 {
            for i in 0..x.rows() {
                x[(i, j)] /= s;
            }
        }
    }
    worst
}
