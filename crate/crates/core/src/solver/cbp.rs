//! Cyclic Bregman projection onto `X1 ∩ X2`, where `X1` fixes every column
//! sum to one and `X2` caps every row sum at one.
//!
//! Every iterate has the form `grad f(x)_ij = theta_ij - lambda_j - mu_i`
//! with `theta = grad f(x~) = -eta L`, so the solver tracks the column
//! multipliers `lambda` and row multipliers `mu >= 0` instead of the matrix.
//! A column step re-solves `lambda_j` so column `j` sums to one. A row step
//! first drops the row's multiplier; if the row then satisfies its cap it
//! stays there (`mu_i = 0`), otherwise `mu_i > 0` puts it on `sum = 1`.
//! Re-evaluating the row with its multiplier released keeps the iteration
//! converging to the projection onto the intersection rather than to an
//! arbitrary point of it, which plain alternating projections do not
//! guarantee once inequality constraints are involved.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::tsallis::{legendre_grad, legendre_grad_inv};
use crate::types::{Allocation, CumulativeLoss};

use super::linalg::solve_psd;
use super::newton::{project_unit_sum, NewtonConfig, UnitSumProjection};
use super::{check_eta, dims_of, objective, repair, SolveResult, SolverConfig, REPAIR_LIMIT};

/// Bregman projection of one column onto `{sum = 1}`, given the gradient
/// `g = grad f(y)` of the column being projected.
pub fn project_column_x1(g: &[f64], cfg: &NewtonConfig) -> Result<UnitSumProjection> {
    project_unit_sum(g, cfg)
}

/// Bregman projection of a positive matrix onto `X2`: rows already summing
/// to at most one are kept, every other row is projected onto `sum = 1`.
pub fn project_rows_x2(x: &Matrix, cfg: &NewtonConfig) -> Result<Matrix> {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = x.row(i);
        if row.iter().sum::<f64>() <= 1.0 {
            continue;
        }
        let g: Vec<f64> = row.iter().map(|&v| legendre_grad(v)).collect();
        let p = project_unit_sum(&g, cfg)?;
        out.row_mut(i).copy_from_slice(&p.x);
    }
    Ok(out)
}

/// A dual Newton polish is attempted after every this many cycles.
const POLISH_EVERY: usize = 5;
/// Newton steps allowed in one polish attempt.
const POLISH_MAX_STEPS: usize = 50;
/// Constraint residual accepted from the dual Newton polish.
const POLISH_TOL: f64 = 1e-11;

/// Column and row multipliers; the primal iterate is
/// `x_ij = 1 / (4 a_ij^2)` with `a_ij = 1 - theta_ij + lambda_j + mu_i`.
struct Duals<'a> {
    theta: &'a Matrix,
    col: Vec<f64>,
    row: Vec<f64>,
}

impl Duals<'_> {
    fn gap(&self, i: usize, j: usize) -> f64 {
        1.0 - self.theta[(i, j)] + self.col[j] + self.row[i]
    }

    fn primal(&self) -> Matrix {
        Matrix::from_fn(self.theta.rows(), self.theta.cols(), |i, j| {
            let a = self.gap(i, j);
            0.25 / (a * a)
        })
    }

    /// Concave dual objective `-sum 1/(4a) - sum lambda - sum mu`; `None`
    /// outside the domain `a > 0`.
    fn value(&self) -> Option<f64> {
        let mut v = -self.col.iter().sum::<f64>() - self.row.iter().sum::<f64>();
        for i in 0..self.theta.rows() {
            for j in 0..self.theta.cols() {
                let a = self.gap(i, j);
                if !(a > 0.0) {
                    return None;
                }
                v -= 0.25 / a;
            }
        }
        Some(v)
    }

    /// Worst violation of column equalities, row caps and complementarity.
    fn kkt_residual(&self, x: &Matrix) -> f64 {
        let col = x
            .column_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        let row = x
            .row_sums()
            .iter()
            .zip(&self.row)
            .map(|(s, &mu)| if mu > 0.0 { (s - 1.0).abs() } else { (s - 1.0).max(0.0) })
            .fold(0.0, f64::max);
        col.max(row)
    }

    /// One cyclic sweep: every column onto `X1`, then every row onto `X2`.
    fn sweep(&mut self, x: &mut Matrix, newton: &NewtonConfig) -> Result<()> {
        let (n, m) = x.shape();
        let mut g_col = vec![0.0; n];
        for j in 0..m {
            for i in 0..n {
                g_col[i] = self.theta[(i, j)] - self.row[i];
            }
            let p = project_column_x1(&g_col, newton)?;
            self.col[j] = p.lambda;
            x.set_column(j, &p.x);
        }
        let mut g_row = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                g_row[j] = self.theta[(i, j)] - self.col[j];
            }
            // With the multiplier released an entry with g >= 1 would be
            // unbounded, so such a row certainly violates its cap.
            let relaxed: f64 = if g_row.iter().any(|&g| g >= 1.0) {
                f64::INFINITY
            } else {
                g_row.iter().map(|&g| legendre_grad_inv(g)).sum()
            };
            if relaxed <= 1.0 {
                self.row[i] = 0.0;
                for (j, &g) in g_row.iter().enumerate() {
                    x[(i, j)] = legendre_grad_inv(g);
                }
            } else {
                let p = project_unit_sum(&g_row, newton)?;
                self.row[i] = p.lambda;
                x.row_mut(i).copy_from_slice(&p.x);
            }
        }
        Ok(())
    }

    /// Two-metric projected Newton ascent on the dual (row multipliers kept
    /// at `mu >= 0`). Rows whose multiplier sits at or near zero with the
    /// gradient pushing it below zero take a scaled gradient step; every
    /// other multiplier takes a Newton step. Steps follow the projection arc
    /// with an Armijo test on the dual value. Returns the number of steps on
    /// success, `None` if progress stalls first.
    fn polish(&mut self, max_steps: usize) -> Option<usize> {
        const ARMIJO: f64 = 1e-4;
        const EPS_ACTIVE: f64 = 1e-3;
        const LOCAL_RESIDUAL: f64 = 1e-6;
        let (n, m) = self.theta.shape();
        for step in 0..max_steps {
            let x = self.primal();
            let resid = self.kkt_residual(&x);
            if resid <= POLISH_TOL {
                return Some(step);
            }
            let col_grad: Vec<f64> = x.column_sums().iter().map(|s| s - 1.0).collect();
            let row_grad: Vec<f64> = x.row_sums().iter().map(|s| s - 1.0).collect();
            let eps = EPS_ACTIVE.min(resid);
            let binding: Vec<bool> = (0..n)
                .map(|i| self.row[i] <= eps && row_grad[i] <= 0.0)
                .collect();
            let free_rows: Vec<usize> = (0..n).filter(|&i| !binding[i]).collect();

            // Negated dual Hessian on the free variables;
            // w_ij = -dx_ij/da_ij = 1 / (2 a^3).
            let k = m + free_rows.len();
            let mut h = vec![0.0; k * k];
            let mut row_diag = vec![0.0; n];
            for i in 0..n {
                for j in 0..m {
                    let a = self.gap(i, j);
                    let w = 0.5 / (a * a * a);
                    h[j * k + j] += w;
                    row_diag[i] += w;
                }
            }
            for (r, &i) in free_rows.iter().enumerate() {
                let ri = m + r;
                h[ri * k + ri] = row_diag[i];
                for j in 0..m {
                    let a = self.gap(i, j);
                    let w = 0.5 / (a * a * a);
                    h[ri * k + j] = w;
                    h[j * k + ri] = w;
                }
            }
            let mut grad = col_grad.clone();
            grad.extend(free_rows.iter().map(|&i| row_grad[i]));
            let sol = solve_psd(&h, &grad, k)?;
            let mut dir_row = vec![0.0; n];
            for i in 0..n {
                if binding[i] {
                    dir_row[i] = row_grad[i] / row_diag[i];
                }
            }
            for (r, &i) in free_rows.iter().enumerate() {
                dir_row[i] = sol[m + r];
            }

            let base = self.value()?;
            let (col0, row0) = (self.col.clone(), self.row.clone());
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for j in 0..m {
                    self.col[j] = col0[j] + t * sol[j];
                }
                for i in 0..n {
                    self.row[i] = (row0[i] + t * dir_row[i]).max(0.0);
                }
                if let Some(v) = self.value() {
                    let predicted: f64 = (0..m)
                        .map(|j| col_grad[j] * (self.col[j] - col0[j]))
                        .chain((0..n).map(|i| row_grad[i] * (self.row[i] - row0[i])))
                        .sum();
                    // Near the solution the change in the dual value drowns in
                    // rounding, so there a full step that clearly shrinks the
                    // residual is also taken.
                    if v - base >= ARMIJO * predicted
                        || (t == 1.0
                            && resid <= LOCAL_RESIDUAL
                            && self.kkt_residual(&self.primal()) < 0.5 * resid)
                    {
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                self.col = col0;
                self.row = row0;
                return None;
            }
        }
        let x = self.primal();
        (self.kkt_residual(&x) <= POLISH_TOL).then_some(max_steps)
    }
}

/// Solves the regularized-leader problem by cyclic Bregman projection
/// started from the unconstrained minimiser.
///
/// After a few sweeps the multipliers are refined by projected Newton steps
/// on the same dual; cyclic sweeps alone converge linearly with a rate that
/// tends to one as the solution approaches a vertex. Should the polish
/// stall, sweeping resumes up to `cbp_max_cycles`.
pub fn solve_cbp(l: &CumulativeLoss, eta: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    check_eta(eta)?;
    let lm = l.matrix();
    let dims = dims_of(lm)?;
    let (n, m) = (dims.n(), dims.m());
    let newton = cfg.newton();

    let theta = lm.scaled(-eta);
    let mut duals = Duals {
        theta: &theta,
        col: vec![0.0; m],
        row: vec![0.0; n],
    };
    let mut x = theta.map(legendre_grad_inv);
    let mut prev = x.clone();
    let mut converged = false;
    let mut cycles = 0;
    let mut polish_steps = 0;

    while cycles < cfg.cbp_max_cycles {
        cycles += 1;
        duals.sweep(&mut x, &newton)?;
        let change = x.max_abs_diff(&prev);
        prev.clone_from(&x);
        // A small change alone is not enough: with very unequal entries a
        // cycle can return almost the same matrix while the multipliers still
        // have far to travel.
        if change < cfg.convergence_tol && duals.kkt_residual(&x) <= cfg.convergence_tol {
            converged = true;
            break;
        }
        if cfg.cbp_polish && cycles % POLISH_EVERY == 0 {
            // A failed attempt only ever raised the dual value, so its
            // progress is kept and sweeping resumes from there.
            if let Some(steps) = duals.polish(POLISH_MAX_STEPS) {
                polish_steps += steps;
                x = duals.primal();
                converged = true;
                break;
            }
            polish_steps += POLISH_MAX_STEPS;
            x = duals.primal();
            prev.clone_from(&x);
        }
    }

    let worst_kkt_residual = duals.kkt_residual(&x);
    let repaired = repair(&mut x);
    if repaired >= REPAIR_LIMIT {
        converged = false;
    }
    let objective = objective(&x, lm, eta)?;
    Ok(SolveResult {
        x: Allocation::new_unchecked(x, dims),
        objective,
        iterations_used: cycles + polish_steps,
        converged,
        worst_kkt_residual,
        repair: repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProblemDims;
    use crate::FEAS_TOL_SOLVER;

    fn cum(rows: &[&[f64]]) -> CumulativeLoss {
        CumulativeLoss::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn rows_under_cap_untouched() {
        let x = Matrix::from_rows(&[[0.3, 0.5], [0.8, 0.8]]).unwrap();
        let y = project_rows_x2(&x, &NewtonConfig::default()).unwrap();
        assert_eq!(y.row(0), x.row(0));
        assert!((y[(1, 0)] - 0.5).abs() < 1e-12 && (y[(1, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn violating_rows_land_on_boundary() {
        let x = Matrix::from_rows(&[[0.9, 0.4, 0.05, 0.3, 0.6]]).unwrap();
        let y = project_rows_x2(&x, &NewtonConfig::default()).unwrap();
        assert!((y.row_sums()[0] - 1.0).abs() < 1e-10);
        // Projection preserves the ordering of entries.
        assert!(y[(0, 0)] > y[(0, 4)] && y[(0, 4)] > y[(0, 1)] && y[(0, 1)] > y[(0, 3)]);
    }

    #[test]
    fn zero_loss_gives_uniform() {
        for (n, m) in [(2, 1), (4, 2), (6, 6), (10, 5)] {
            let d = ProblemDims::new(n, m).unwrap();
            let r = solve_cbp(&CumulativeLoss::zeros(d), 0.5, &SolverConfig::default()).unwrap();
            assert!(r.converged);
            let u = 1.0 / n as f64;
            assert!(r.x.matrix().as_slice().iter().all(|v| (v - u).abs() < 1e-9));
        }
    }

    #[test]
    fn two_items_one_position_heavy_loss() {
        let r = solve_cbp(&cum(&[&[0.0], &[10.0]]), 0.5, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        let x = r.x.matrix();
        assert!(x[(0, 0)] > 0.9 && x[(1, 0)] < 0.1);
        // Interior optimum: derivative of the reduced objective vanishes.
        let (a, b) = (x[(0, 0)], x[(1, 0)]);
        let d = -0.5 / (0.5 * a.sqrt()) - (10.0 - 0.5 / (0.5 * b.sqrt()));
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn active_rows_are_feasible() {
        // m = n forces every row constraint to bind.
        let l = cum(&[&[0.0, 5.0, 2.0], &[4.0, 0.0, 1.0], &[3.0, 3.0, 0.5]]);
        let r = solve_cbp(&l, 0.3, &SolverConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.x.feasibility(FEAS_TOL_SOLVER).feasible);
        for s in r.x.matrix().row_sums() {
            assert!((s - 1.0).abs() < 1e-7);
        }
    }
}
