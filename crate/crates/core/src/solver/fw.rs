//! Frank-Wolfe over `Conv(X)` with [`linmin`] as the linear oracle.
//!
//! Two step rules are available (see [`FwStep`]): the open-loop schedule
//! `gamma_k = 2 / (1 + k)`, and pairwise steps with exact line search, which
//! keep the iterate as an explicit mixture of ranked lists and shift weight
//! from the worst list in the mixture to the oracle's list.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::polytope::{complete_to_doubly_stochastic, linmin};
use crate::sampler::{action_from_permutation, decompose};
use crate::types::{Allocation, CumulativeLoss, ProblemDims};

use super::{
    check_eta, dims_of, objective, objective_gradient, repair, FwStep, SolveResult, SolverConfig,
    REPAIR_LIMIT,
};

/// Pairwise iterations stop once the duality gap is this small.
const PAIRWISE_GAP_STOP: f64 = 1e-11;

/// Runs Frank-Wolfe from `warm_start` and returns the final iterate.
///
/// With [`FwStep::OpenLoop`] exactly `cfg.fw_max_iters` iterations are run;
/// the first has `gamma = 1`, so the warm start only influences the first
/// gradient. With [`FwStep::Pairwise`] the warm start is decomposed into
/// ranked lists that seed the mixture, and iteration stops early once the gap
/// is negligible. The reported residual is the duality gap
/// `<x - s, grad(x)>` at the returned iterate.
pub fn solve_fw(
    l: &CumulativeLoss,
    eta: f64,
    cfg: &SolverConfig,
    warm_start: &Allocation,
) -> Result<SolveResult> {
    check_eta(eta)?;
    let lm = l.matrix();
    let dims = dims_of(lm)?;
    dims.check_shape(warm_start.matrix())?;

    let (mut x, iterations) = match cfg.fw_step {
        FwStep::OpenLoop => open_loop(lm, eta, dims, cfg.fw_max_iters, warm_start)?,
        FwStep::Pairwise => pairwise(lm, eta, dims, cfg.fw_max_iters, warm_start)?,
    };

    let r = objective_gradient(&x, lm, eta);
    let s = linmin(&r, dims)?;
    let gap = x.dot(&r) - s.dot(&r);

    let repaired = repair(&mut x);
    let converged = gap < cfg.fw_gap_tol && repaired < REPAIR_LIMIT;
    let objective = objective(&x, lm, eta)?;
    Ok(SolveResult {
        x: Allocation::new_unchecked(x, dims),
        objective,
        iterations_used: iterations,
        converged,
        worst_kkt_residual: gap,
        repair: repaired,
    })
}

fn open_loop(
    lm: &Matrix,
    eta: f64,
    dims: ProblemDims,
    iters: usize,
    warm_start: &Allocation,
) -> Result<(Matrix, usize)> {
    let mut x = warm_start.matrix().clone();
    for k in 1..=iters {
        let r = objective_gradient(&x, lm, eta);
        let s = linmin(&r, dims)?.to_matrix(dims);
        x.lerp_assign(&s, 2.0 / (1.0 + k as f64));
    }
    Ok((x, iters))
}

/// A ranked list (item per position) with its mixture weight.
type Vertex = (Vec<usize>, f64);

fn pairwise(
    lm: &Matrix,
    eta: f64,
    dims: ProblemDims,
    iters: usize,
    warm_start: &Allocation,
) -> Result<(Matrix, usize)> {
    let m = dims.m();
    let mut active = initial_mixture(lm, eta, dims, warm_start)?;
    let mut x = Matrix::zeros(dims.n(), m);
    for (items, w) in &active {
        for (j, &i) in items.iter().enumerate() {
            x.as_mut_slice()[i * m + j] += w;
        }
    }

    let mut used = 0;
    for _ in 0..iters {
        let r = exact_gradient(&x, lm, eta);
        let s = linmin(&r, dims)?;
        let score = |items: &[usize]| -> f64 { items.iter().enumerate().map(|(j, &i)| r[(i, j)]).sum() };
        let gap = x.dot(&r) - score(s.items());
        if gap <= PAIRWISE_GAP_STOP {
            break;
        }
        used += 1;
        let away = (0..active.len())
            .max_by(|&a, &b| score(&active[a].0).total_cmp(&score(&active[b].0)))
            .expect("mixture is never empty");
        if active[away].0 == s.items() {
            break;
        }

        // Direction d = s - v touches at most 2m entries.
        let mut dir: Vec<(usize, f64)> = Vec::with_capacity(2 * m);
        for (j, (&si, &vi)) in s.items().iter().zip(&active[away].0).enumerate() {
            if si != vi {
                dir.push((si * m + j, 1.0));
                dir.push((vi * m + j, -1.0));
            }
        }
        let gamma_max = active[away].1;
        let gamma = line_search(&x, lm, eta, &dir, gamma_max);
        if gamma <= 0.0 {
            break;
        }
        for &(idx, d) in &dir {
            let v = &mut x.as_mut_slice()[idx];
            *v = (*v + gamma * d).max(0.0);
        }
        if gamma >= gamma_max {
            active.swap_remove(away);
        } else {
            active[away].1 -= gamma;
        }
        match active.iter_mut().find(|(items, _)| items == s.items()) {
            Some(entry) => entry.1 += gamma,
            None => active.push((s.items().to_vec(), gamma)),
        }
    }
    Ok((x, used))
}

/// Objective gradient without the allocation floor, so that entries whose
/// optimal value lies below the floor are still driven correctly. Exact zeros
/// get a huge but finite slope.
fn exact_gradient(x: &Matrix, lm: &Matrix, eta: f64) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        lm[(i, j)] - 0.5 / (eta * x[(i, j)].max(f64::MIN_POSITIVE).sqrt())
    })
}

/// Writes `warm_start` as a mixture of ranked lists; falls back to the single
/// oracle vertex at the warm start's gradient.
fn initial_mixture(
    lm: &Matrix,
    eta: f64,
    dims: ProblemDims,
    warm_start: &Allocation,
) -> Result<Vec<Vertex>> {
    if let Ok(d) = decompose(&complete_to_doubly_stochastic(warm_start)) {
        let mut mixture: Vec<Vertex> = Vec::new();
        for (gamma, perm) in d.terms() {
            let items = action_from_permutation(perm, dims.m()).items().to_vec();
            match mixture.iter_mut().find(|(it, _)| *it == items) {
                Some(entry) => entry.1 += gamma,
                None => mixture.push((items, *gamma)),
            }
        }
        return Ok(mixture);
    }
    let r = objective_gradient(warm_start.matrix(), lm, eta);
    Ok(vec![(linmin(&r, dims)?.items().to_vec(), 1.0)])
}

/// Minimises `gamma -> F(x + gamma d)` over `[0, gamma_max]` by bisection on
/// the derivative, which is increasing since `F` is convex.
fn line_search(x: &Matrix, lm: &Matrix, eta: f64, dir: &[(usize, f64)], gamma_max: f64) -> f64 {
    let xs = x.as_slice();
    let ls = lm.as_slice();
    let slope = |g: f64| -> f64 {
        dir.iter()
            .map(|&(idx, d)| {
                let v = (xs[idx] + g * d).max(0.0);
                d * (ls[idx] - 0.5 / (eta * v.sqrt()))
            })
            .sum()
    };
    if !(slope(0.0) < 0.0) {
        return 0.0;
    }
    if slope(gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
