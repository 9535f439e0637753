//! Named property suites run by `check <suite>`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{preset, StochasticParams, PRESETS};
use crate::error::{Error, Result};
use crate::learner::estimate_loss;
use crate::matrix::Matrix;
use crate::oracle::verify_gap_inequality;
use crate::polytope::{complete_to_doubly_stochastic, DoublyStochastic};
use crate::sampler::{action_from_permutation, decompose};
use crate::solver::{solve, Route, SolverConfig};
use crate::types::{Allocation, CumulativeLoss, ProblemDims};

pub const SUITES: [&str; 5] = ["gap", "sampler", "solver-agree", "decompose", "estimator"];

const SAMPLES: usize = 100_000;

/// Worst-case outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub suite: String,
    pub metric: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub cases: usize,
    pub notes: Vec<String>,
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} = {:e} (threshold {:e}, {} cases)",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.metric,
            self.value,
            self.threshold,
            self.cases
        )?;
        for note in &self.notes {
            write!(f, "\n  {note}")?;
        }
        Ok(())
    }
}

/// Runs the named suite with generator seed `seed`. The solver suite compares
/// the two routes of `solver`.
pub fn check_invariants(suite: &str, seed: u64, solver: &SolverConfig) -> Result<InvariantReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        "gap" => gap(&mut rng),
        "sampler" => sampler(&mut rng),
        "solver-agree" => solver_agree(&mut rng, solver),
        "decompose" => decomposition(&mut rng),
        "estimator" => estimator(&mut rng),
        other => Err(Error::UnknownSuite(other.to_string())),
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> Result<StochasticParams> {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=n.min(4));
    let mut alpha: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    alpha.sort_by(|a, b| b.total_cmp(a));
    let mut beta: Vec<f64> = (0..m).map(|_| rng.gen_range(1e-3..1.0)).collect();
    beta.sort_by(|a, b| b.total_cmp(a));
    StochasticParams::new(alpha, beta)
}

/// Random point of the Birkhoff polytope: a mixture of `k` permutations.
pub(crate) fn random_doubly_stochastic(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let weights: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut w = Matrix::zeros(n, n);
    let mut perm: Vec<usize> = (0..n).collect();
    for g in weights {
        perm.shuffle(rng);
        for (i, &j) in perm.iter().enumerate() {
            w.as_mut_slice()[i * n + j] += g / total;
        }
    }
    w
}

/// Random feasible allocation: the first `m` columns of a random doubly
/// stochastic matrix.
pub(crate) fn random_allocation(dims: ProblemDims, k: usize, rng: &mut ChaCha8Rng) -> Allocation {
    let w = random_doubly_stochastic(dims.n(), k, rng);
    let x = Matrix::from_fn(dims.n(), dims.m(), |i, j| w[(i, j)]);
    Allocation::new(x, dims, 1e-9).expect("columns of a doubly stochastic matrix")
}

fn gap(rng: &mut ChaCha8Rng) -> Result<InvariantReport> {
    let threshold = -1e-12;
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for _ in 0..200 {
        worst = worst.min(verify_gap_inequality(&random_params(rng)?)?.min_slack);
        cases += 1;
    }
    for name in PRESETS {
        worst = worst.min(verify_gap_inequality(&preset(name)?)?.min_slack);
        cases += 1;
    }
    Ok(InvariantReport {
        suite: "gap".into(),
        metric: "min slack",
        value: worst,
        threshold,
        passed: worst >= threshold,
        cases,
        notes: vec![],
    })
}

/// Largest `|mean - x| / sqrt(x (1 - x) / N)` over entries and allocations.
fn sampler(rng: &mut ChaCha8Rng) -> Result<InvariantReport> {
    let dims = ProblemDims::new(6, 3)?;
    let mut worst: f64 = 0.0;
    let cases = 20;
    for _ in 0..cases {
        let k = rng.gen_range(1..=10);
        let x = random_allocation(dims, k, rng);
        let d = decompose(&complete_to_doubly_stochastic(&x))?;
        let mut counts = Matrix::zeros(dims.n(), dims.m());
        for _ in 0..SAMPLES {
            let a = action_from_permutation(d.sample(rng), dims.m());
            for (j, &i) in a.items().iter().enumerate() {
                counts.as_mut_slice()[i * dims.m() + j] += 1.0;
            }
        }
        for (c, &p) in counts.as_slice().iter().zip(x.matrix().as_slice()) {
            let diff = (c / SAMPLES as f64 - p).abs();
            let sd = (p * (1.0 - p) / SAMPLES as f64).sqrt();
            let z = if sd > 0.0 {
                diff / sd
            } else if diff > 1e-9 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(z);
        }
    }
    Ok(InvariantReport {
        suite: "sampler".into(),
        metric: "max standardized deviation",
        value: worst,
        threshold: 4.0,
        passed: worst <= 4.0,
        cases,
        notes: vec![],
    })
}

fn solver_agree(rng: &mut ChaCha8Rng, solver: &SolverConfig) -> Result<InvariantReport> {
    let threshold = 1e-5;
    let cbp = solver.with_route(Route::Cbp);
    let fw = solver.with_route(Route::Fw);
    let mut worst: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut unconverged = 0;
    let cases = 100;
    for _ in 0..cases {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=n.min(4));
        let dims = ProblemDims::new(n, m)?;
        let scale = rng.gen_range(0.0..10.0);
        let l = CumulativeLoss::new(Matrix::from_fn(n, m, |_, _| rng.gen_range(0.0..=scale)))?;
        let eta = rng.gen_range(0.05..=0.5);
        let warm = Allocation::uniform(dims);
        let a = solve(&l, eta, &cbp, &warm)?;
        let b = solve(&l, eta, &fw, &warm)?;
        worst = worst.max((a.objective - b.objective).abs());
        worst_gap = worst_gap.max(b.worst_kkt_residual);
        unconverged += usize::from(!a.converged) + usize::from(!b.converged);
    }
    Ok(InvariantReport {
        suite: "solver-agree".into(),
        metric: "max |obj_cbp - obj_fw|",
        value: worst,
        threshold,
        passed: worst <= threshold,
        cases,
        notes: vec![
            format!("frank-wolfe step rule {:?}, {} iterations", solver.fw_step, solver.fw_max_iters),
            format!("max frank-wolfe duality gap {worst_gap:e}"),
            format!("unconverged solves {unconverged}"),
        ],
    })
}

fn decomposition(rng: &mut ChaCha8Rng) -> Result<InvariantReport> {
    let threshold = 1e-8;
    let mut worst: f64 = 0.0;
    let mut too_long = 0;
    let cases = 100;
    for _ in 0..cases {
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=2 * n * n);
        let w = random_doubly_stochastic(n, k, rng);
        let d = decompose(&DoublyStochastic::new(w.clone(), 1e-9)?)?;
        worst = worst.max(d.reconstruct().max_abs_diff(&w));
        if d.len() > (n * n).saturating_sub(2 * n) + 2 {
            too_long += 1;
        }
    }
    Ok(InvariantReport {
        suite: "decompose".into(),
        metric: "max reconstruction error",
        value: worst,
        threshold,
        passed: worst <= threshold && too_long == 0,
        cases,
        notes: vec![format!("decompositions over the term bound: {too_long}")],
    })
}

/// Largest `|mean(ell_hat) - ell| / sd` with `sd^2 = ell^2 (1 - x) / (x N)`.
fn estimator(rng: &mut ChaCha8Rng) -> Result<InvariantReport> {
    let dims = ProblemDims::new(5, 3)?;
    let random = random_allocation(dims, 6, rng);
    let uniform = Allocation::uniform(dims);
    let mut x = uniform.matrix().clone();
    x.lerp_assign(random.matrix(), 0.5);
    let x = Allocation::new(x, dims, 1e-9)?;
    let ell = Matrix::from_fn(dims.n(), dims.m(), |_, _| rng.gen::<f64>());
    let d = decompose(&complete_to_doubly_stochastic(&x))?;
    let mut sum = Matrix::zeros(dims.n(), dims.m());
    for _ in 0..SAMPLES {
        let a = action_from_permutation(d.sample(rng), dims.m());
        let observed: Vec<f64> = a.items().iter().enumerate().map(|(j, &i)| ell[(i, j)]).collect();
        sum.add_assign(estimate_loss(&x, &a, &observed)?.matrix());
    }
    let mut worst: f64 = 0.0;
    for k in 0..dims.n() * dims.m() {
        let (p, l) = (x.matrix().as_slice()[k], ell.as_slice()[k]);
        let sd = (l * l * (1.0 - p) / (p * SAMPLES as f64)).sqrt();
        let diff = (sum.as_slice()[k] / SAMPLES as f64 - l).abs();
        worst = worst.max(if sd > 0.0 { diff / sd } else { 0.0 });
    }
    Ok(InvariantReport {
        suite: "estimator".into(),
        metric: "max standardized deviation",
        value: worst,
        threshold: 4.0,
        passed: worst <= 4.0,
        cases: 1,
        notes: vec![format!("min allocation entry {:e}", x.matrix().min_entry())],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FwStep;

    #[test]
    fn unknown_suite() {
        assert!(matches!(
            check_invariants("nope", 0, &SolverConfig::default()),
            Err(Error::UnknownSuite(_))
        ));
    }

    #[test]
    fn fast_suites_pass() {
        let pairwise = SolverConfig {
            fw_step: FwStep::Pairwise,
            ..SolverConfig::default()
        };
        for suite in ["gap", "decompose", "estimator"] {
            let r = check_invariants(suite, 1, &SolverConfig::default()).unwrap();
            assert!(r.passed, "{r}");
        }
        let r = check_invariants("solver-agree", 1, &pairwise).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn random_allocations_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = ProblemDims::new(6, 3).unwrap();
        for _ in 0..20 {
            let x = random_allocation(d, 5, &mut rng);
            assert!(x.feasibility(1e-12).worst() <= 1e-12);
        }
    }
}
