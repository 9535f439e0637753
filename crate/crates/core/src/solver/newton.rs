//! Bregman projection of one column (or row) onto `{x : sum x = 1}`.
//!
//! Given the gradient `g = grad f(y)` of the point being projected, the
//! projection is `x_i = 1/4 (g_i - lambda - 1)^-2`, where the scalar
//! multiplier `lambda` solves `sum_i x_i = 1`. The left-hand side is convex
//! and decreasing in `lambda` on the branch `lambda > max_i g_i - 1`, so
//! Newton's method started left of the root increases monotonically to it.

use crate::error::{Error, Result};
use crate::tsallis::legendre_grad_inv;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Tolerance on `|sum x - 1|`.
    pub tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 50,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitSumProjection {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Newton iterations taken.
    pub iterations: usize,
    /// True if Newton stalled and bisection finished the job.
    pub used_bisection: bool,
}

fn entries(g: &[f64], lambda: f64, out: &mut [f64]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut deriv = 0.0;
    for (o, &gi) in out.iter_mut().zip(g) {
        let a = 1.0 - gi + lambda;
        let x = legendre_grad_inv(gi - lambda);
        *o = x;
        sum += x;
        deriv += 0.5 / (a * a * a);
    }
    (sum, deriv)
}

/// Residual accepted once bisection has exhausted floating-point resolution.
const STAGNATION_TOL: f64 = 1e-9;

/// Solves `sum_i 1/4 (g_i - lambda - 1)^-2 = 1` for `lambda`.
///
/// Newton starts from `lambda = 0` when that point lies on the valid branch
/// (`g_i - lambda - 1 < 0` for all `i`), otherwise from a point known to be
/// left of the root. A step that leaves the branch is replaced by that same
/// left point. If Newton has not met the tolerance after `max_iters` steps
/// the bracketed root is finished by bisection.
pub fn project_unit_sum(g: &[f64], cfg: &NewtonConfig) -> Result<UnitSumProjection> {
    let n = g.len();
    if n == 0 {
        return Err(Error::Dimensions("cannot project an empty vector".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("gradient entries must be finite".into()));
    }
    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let branch = gmax - 1.0;
    // At lambda_left the largest entry equals 1, so the sum is >= 1.
    let lambda_left = branch + 0.5;
    // At lambda_right every entry is <= 1/n, so the sum is <= 1.
    let lambda_right = branch + 0.5 * (n as f64).sqrt();

    let mut x = vec![0.0; n];
    let mut lambda = if branch < 0.0 { 0.0 } else { lambda_left };
    let (mut lo, mut hi) = (lambda_left, lambda_right);

    for iter in 0..=cfg.max_iters {
        let (sum, deriv) = entries(g, lambda, &mut x);
        let h = sum - 1.0;
        if h.abs() <= cfg.tol {
            return Ok(UnitSumProjection {
                x,
                lambda,
                iterations: iter,
                used_bisection: false,
            });
        }
        if h > 0.0 {
            lo = lo.max(lambda);
        } else {
            hi = hi.min(lambda);
        }
        if iter == cfg.max_iters {
            break;
        }
        let next = lambda + h / deriv;
        lambda = if next.is_finite() && next > branch {
            next
        } else {
            lambda_left.max(lo)
        };
    }

    // Bisection fallback on [lo, hi] (sum(lo) >= 1 >= sum(hi)).
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (sum, _) = entries(g, mid, &mut x);
        residual = sum - 1.0;
        if residual.abs() <= cfg.tol {
            return Ok(UnitSumProjection {
                x,
                lambda: mid,
                iterations: cfg.max_iters,
                used_bisection: true,
            });
        }
        if residual > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            // The bracket cannot shrink further in floating point; accept the
            // root if it is as good as exact arithmetic allows.
            if residual.abs() <= STAGNATION_TOL {
                return Ok(UnitSumProjection {
                    x,
                    lambda: mid,
                    iterations: cfg.max_iters,
                    used_bisection: true,
                });
            }
            break;
        }
    }
    Err(Error::NewtonNonConvergence {
        iterations: cfg.max_iters,
        residual: residual.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsallis::legendre_grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Root of the unit-sum equation by plain bisection, independent of the
    /// Newton path.
    fn bisection_lambda(g: &[f64]) -> f64 {
        let sum = |l: f64| g.iter().map(|&gi| 0.25 / (1.0 - gi + l).powi(2)).sum::<f64>();
        let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (gmax - 1.0 + 1e-300, gmax - 1.0 + g.len() as f64);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        for g in [-3.0, -0.2, 0.0, 0.7] {
            let p = project_unit_sum(&[g, g], &NewtonConfig::default()).unwrap();
            assert!((p.x[0] - 0.5).abs() < 1e-12 && (p.x[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_entry_is_forced_to_one() {
        for g in [-10.0, -1.0, 0.5, 0.99] {
            let p = project_unit_sum(&[g], &NewtonConfig::default()).unwrap();
            assert!((p.x[0] - 1.0).abs() < 1e-12);
            // (g - lambda - 1)^2 = 1/4 on the valid branch.
            assert!((g - p.lambda - 1.0 + 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn random_columns_match_closed_form_and_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = NewtonConfig::default();
        for _ in 0..1000 {
            let g: Vec<f64> = (0..6)
                .map(|_| legendre_grad(rng.gen_range(1e-6..1.0)) - rng.gen_range(0.0..50.0))
                .collect();
            let p = project_unit_sum(&g, &cfg).unwrap();
            assert!(!p.used_bisection);
            assert!(p.iterations <= cfg.max_iters);
            let s: f64 = p.x.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            for (xi, gi) in p.x.iter().zip(&g) {
                let closed = 0.25 * (gi - p.lambda - 1.0).powi(-2);
                assert!((xi - closed).abs() <= 1e-14 * closed.max(1.0));
            }
            let reference = bisection_lambda(&g);
            assert!((p.lambda - reference).abs() < 1e-8 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn start_outside_branch_recovers() {
        // g above 1 makes lambda = 0 invalid.
        let g = [3.0, 2.5, -1.0];
        let p = project_unit_sum(&g, &NewtonConfig::default()).unwrap();
        assert!((p.x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.iter().all(|gi| gi - p.lambda - 1.0 < 0.0));
    }

    #[test]
    fn bisection_fallback_when_newton_capped() {
        let cfg = NewtonConfig {
            max_iters: 1,
            tol: 1e-12,
        };
        let g = [-1e6, 0.9999, -3.0, -0.5];
        let p = project_unit_sum(&g, &cfg).unwrap();
        assert!(p.used_bisection);
        assert!((p.x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
