//! Brute-force references: exhaustive action enumeration, grid search for the
//! regularized leader on tiny instances, the gap-inequality check and regret
//! accounting.

use crate::env::{gap_matrix, Environment, StochasticParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::polytope::linmin;
use crate::solver::objective;
use crate::types::{Action, ProblemDims};

/// Largest number of ranked lists [`enumerate_actions`] will produce.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Default number of grid points for [`brute_force_leader`].
pub const DEFAULT_GRID: usize = 1_000_000;

/// All `n! / (n - m)!` ranked lists in lexicographic order of their items.
pub fn enumerate_actions(dims: ProblemDims) -> Result<Vec<Action>> {
    let count = dims.action_count();
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (n, m) = (dims.n(), dims.m());
    let mut out = Vec::with_capacity(count as usize);
    let mut items = Vec::with_capacity(m);
    let mut used = vec![false; n];
    fn extend(n: usize, m: usize, items: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Action>) {
        if items.len() == m {
            out.push(Action::from_items_unchecked(items.clone()));
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                items.push(i);
                extend(n, m, items, used, out);
                items.pop();
                used[i] = false;
            }
        }
    }
    extend(n, m, &mut items, &mut used, &mut out);
    Ok(out)
}

/// Minimises the regularized-leader objective by exhaustive search over a
/// parameterisation of `Conv(X)` followed by local refinement.
///
/// Supported shapes: `m = 1` with `n <= 4` (the probability simplex, up to
/// three free coordinates) and `n = m = 2` (one free coordinate). One-
/// dimensional cases use `grid` points and a golden-section finish; higher
/// dimensions use a grid of about `grid` points and a shrinking pattern
/// search.
pub fn brute_force_leader(l: &Matrix, eta: f64, grid: usize) -> Result<(f64, Matrix)> {
    let dims = ProblemDims::new(l.rows(), l.cols())?;
    let (n, m) = (dims.n(), dims.m());
    if grid < 2 {
        return Err(Error::InvalidParams("grid needs at least two points".into()));
    }
    let eval = |x: &Matrix| objective(x, l, eta).expect("nonnegative by construction");
    match (n, m) {
        (1, 1) => {
            let x = Matrix::filled(1, 1, 1.0);
            Ok((eval(&x), x))
        }
        (2, 1) => {
            let build = |p: f64| Matrix::from_vec(2, 1, vec![p, 1.0 - p]).expect("shape");
            let p = minimise_1d(|p| eval(&build(p)), grid);
            let x = build(p);
            Ok((eval(&x), x))
        }
        (2, 2) => {
            let build = |p: f64| Matrix::from_vec(2, 2, vec![p, 1.0 - p, 1.0 - p, p]).expect("shape");
            let p = minimise_1d(|p| eval(&build(p)), grid);
            let x = build(p);
            Ok((eval(&x), x))
        }
        (3 | 4, 1) => {
            let k = n - 1;
            let build = |z: &[f64]| {
                let rest = 1.0 - z.iter().sum::<f64>();
                let mut v = z.to_vec();
                v.push(rest.max(0.0));
                Matrix::from_vec(n, 1, v).expect("shape")
            };
            let inside = |z: &[f64]| z.iter().all(|&v| v >= 0.0) && z.iter().sum::<f64>() <= 1.0;
            let z = minimise_simplex(|z| eval(&build(z)), inside, k, grid);
            let x = build(&z);
            Ok((eval(&x), x))
        }
        _ => Err(Error::OracleDimensions(format!(
            "brute force supports m = 1 with n <= 4 and n = m = 2, got n = {n}, m = {m}"
        ))),
    }
}

fn minimise_1d(f: impl Fn(f64) -> f64, grid: usize) -> f64 {
    let h = 1.0 / (grid - 1) as f64;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..grid {
        let v = f(k as f64 * h);
        if v < best.0 {
            best = (v, k);
        }
    }
    let k = best.1;
    let mut lo = (k.saturating_sub(1)) as f64 * h;
    let mut hi = ((k + 1).min(grid - 1)) as f64 * h;
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    [mid, best.1 as f64 * h]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("two candidates")
}

fn minimise_simplex(
    f: impl Fn(&[f64]) -> f64,
    inside: impl Fn(&[f64]) -> bool,
    k: usize,
    grid: usize,
) -> Vec<f64> {
    let per_axis = ((grid as f64).powf(1.0 / k as f64).floor() as usize).max(2);
    let h = 1.0 / (per_axis - 1) as f64;
    let mut best = (f64::INFINITY, vec![0.0; k]);
    let mut idx = vec![0usize; k];
    loop {
        let z: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        if inside(&z) {
            let v = f(&z);
            if v < best.0 {
                best = (v, z);
            }
        }
        let mut d = 0;
        loop {
            if d == k {
                break;
            }
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == k {
            break;
        }
    }

    // Pattern search over the coordinate directions and the directions that
    // trade mass between two coordinates.
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for a in 0..k {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[a] = s;
            dirs.push(d);
        }
        for b in a + 1..k {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; k];
                d[a] = s;
                d[b] = -s;
                dirs.push(d);
            }
        }
    }
    let (mut fz, mut z) = best;
    let mut step = h;
    while step > 1e-14 {
        let mut improved = false;
        for d in &dirs {
            let cand: Vec<f64> = z.iter().zip(d).map(|(v, s)| v + step * s).collect();
            if inside(&cand) {
                let v = f(&cand);
                if v < fz {
                    fz = v;
                    z = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    z
}

/// Worst case of the gap inequality over all ranked lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `min over lists of sum_j (alpha_j - alpha_{i_j}) beta_j
    ///  - 1/2 sum_j Delta_{i_j, j}`.
    pub min_slack: f64,
    pub argmin: Action,
    pub actions_checked: usize,
}

/// Checks `sum_j (alpha_j beta_j - alpha_{i_j} beta_j) >= 1/2 sum_j Delta_{i_j, j}`
/// for every ranked list.
pub fn verify_gap_inequality(p: &StochasticParams) -> Result<GapReport> {
    let actions = enumerate_actions(p.dims())?;
    let gaps = gap_matrix(p);
    let mut worst: Option<(f64, &Action)> = None;
    for a in &actions {
        let regret = expected_regret(p, a);
        let bound: f64 = a
            .items()
            .iter()
            .enumerate()
            .map(|(j, &i)| gaps.delta[(i, j)])
            .sum();
        let slack = regret - 0.5 * bound;
        if worst.is_none_or(|(w, _)| slack < w) {
            worst = Some((slack, a));
        }
    }
    let (min_slack, argmin) = worst.expect("at least one action");
    Ok(GapReport {
        min_slack,
        argmin: argmin.clone(),
        actions_checked: actions.len(),
    })
}

/// Expected regret of one round: `sum_j beta_j (alpha_j - alpha_{i_j})`.
pub fn expected_regret(p: &StochasticParams, a: &Action) -> f64 {
    a.items()
        .iter()
        .enumerate()
        .map(|(j, &i)| p.beta()[j] * (p.alpha()[j] - p.alpha()[i]))
        .sum()
}

/// Cumulative pseudo-regret of an action sequence under fixed parameters.
pub fn stochastic_regret(p: &StochasticParams, actions: &[Action]) -> Vec<f64> {
    let mut total = 0.0;
    actions
        .iter()
        .map(|a| {
            total += expected_regret(p, a);
            total
        })
        .collect()
}

/// The ranked list minimising `<X, loss>` and its value; exhaustive when the
/// lists can be enumerated, otherwise by assignment.
pub fn best_in_hindsight(loss: &Matrix) -> Result<(Action, f64)> {
    let dims = ProblemDims::new(loss.rows(), loss.cols())?;
    match enumerate_actions(dims) {
        Ok(all) => Ok(best_among(&all, loss)),
        Err(Error::EnumerationGuard { .. }) => {
            let a = linmin(loss, dims)?;
            let v = a.dot(loss);
            Ok((a, v))
        }
        Err(e) => Err(e),
    }
}

fn best_among(actions: &[Action], loss: &Matrix) -> (Action, f64) {
    let (v, a) = actions
        .iter()
        .map(|a| (a.dot(loss), a))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("at least one action");
    (a.clone(), v)
}

/// Cumulative regret of a trace of `(played list, loss matrix)` against the
/// best fixed list in hindsight for each prefix.
pub fn hindsight_regret(trace: &[(Action, Matrix)]) -> Result<Vec<f64>> {
    let Some((_, first)) = trace.first() else {
        return Ok(Vec::new());
    };
    let mut cumulative = Matrix::zeros(first.rows(), first.cols());
    let mut played = 0.0;
    let mut out = Vec::with_capacity(trace.len());
    for (a, loss) in trace {
        played += a.dot(loss);
        cumulative.add_assign(loss);
        out.push(played - best_in_hindsight(&cumulative)?.1);
    }
    Ok(out)
}

/// How [`RegretTracker`] scores a run.
#[derive(Debug, Clone)]
enum RegretMode {
    /// Fixed click model: exact expected gap of each played list.
    Stochastic(StochasticParams),
    /// Expected losses against the best fixed list in hindsight. `actions`
    /// holds every ranked list when they can be enumerated.
    Hindsight {
        cumulative: Matrix,
        actions: Option<Vec<Action>>,
    },
}

/// Running pseudo-regret of a learner.
///
/// For the stochastic environment each round adds
/// `sum_j beta_j (alpha_j - alpha_{I_j})`. For the other environments the
/// played lists are scored with the round's expected loss matrix and
/// compared with the best fixed list for the summed expected losses.
#[derive(Debug, Clone)]
pub struct RegretTracker {
    mode: RegretMode,
    played: f64,
}

impl RegretTracker {
    pub fn new(env: &Environment) -> Self {
        let mode = match env {
            Environment::Stochastic(p) => RegretMode::Stochastic(p.clone()),
            _ => {
                let d = env.dims();
                RegretMode::Hindsight {
                    cumulative: Matrix::zeros(d.n(), d.m()),
                    actions: enumerate_actions(d).ok(),
                }
            }
        };
        RegretTracker { mode, played: 0.0 }
    }

    /// Adds round `t` of `env`, in which `action` was played.
    pub fn record(&mut self, env: &Environment, t: u64, action: &Action) {
        match &mut self.mode {
            RegretMode::Stochastic(p) => self.played += expected_regret(p, action),
            RegretMode::Hindsight { cumulative, .. } => {
                let mean = env.mean_loss(t);
                self.played += action.dot(&mean);
                cumulative.add_assign(&mean);
            }
        }
    }

    /// Cumulative regret so far.
    pub fn regret(&self) -> Result<f64> {
        match &self.mode {
            RegretMode::Stochastic(_) => Ok(self.played),
            RegretMode::Hindsight {
                cumulative,
                actions: Some(all),
            } => Ok(self.played - best_among(all, cumulative).1),
            RegretMode::Hindsight { cumulative, .. } => Ok(self.played - best_in_hindsight(cumulative)?.1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::preset;
    use crate::solver::{solve_cbp, SolverConfig};
    use crate::types::CumulativeLoss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(n: usize, m: usize, rng: &mut ChaCha8Rng) -> StochasticParams {
        let mut alpha: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        alpha.sort_by(|a, b| b.total_cmp(a));
        let mut beta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
        beta.sort_by(|a, b| b.total_cmp(a));
        StochasticParams::new(alpha, beta).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let count = |n, m| enumerate_actions(ProblemDims::new(n, m).unwrap()).unwrap().len();
        assert_eq!(count(3, 2), 6);
        assert_eq!(count(2, 2), 2);
        assert_eq!(count(10, 5), 30240);
        assert_eq!(count(1, 1), 1);
        let all = enumerate_actions(ProblemDims::new(3, 2).unwrap()).unwrap();
        let items: Vec<_> = all.iter().map(|a| a.items().to_vec()).collect();
        assert_eq!(items, vec![vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 2], vec![2, 0], vec![2, 1]]);
        assert!(matches!(
            enumerate_actions(ProblemDims::new(12, 8).unwrap()),
            Err(Error::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn brute_force_examples() {
        let (_, x) = brute_force_leader(&Matrix::zeros(2, 1), 0.5, DEFAULT_GRID).unwrap();
        // The objective is flat to rounding within ~1e-8 of the optimum.
        assert!((x[(0, 0)] - 0.5).abs() < 1e-6);

        let l = Matrix::from_rows(&[[0.0], [10.0]]).unwrap();
        let (v, x) = brute_force_leader(&l, 0.5, DEFAULT_GRID).unwrap();
        let c = solve_cbp(&CumulativeLoss::new(l).unwrap(), 0.5, &SolverConfig::default()).unwrap();
        assert!((v - c.objective).abs() < 1e-9, "{v} vs {}", c.objective);
        assert!(x.max_abs_diff(c.x.matrix()) < 1e-6);

        // Little regularisation: the minimiser approaches the best vertex.
        let l = Matrix::from_rows(&[[3.0], [1.0], [2.0]]).unwrap();
        let (_, x) = brute_force_leader(&l, 1e3, 10_000).unwrap();
        assert!(x[(1, 0)] > 0.999, "{x:?}");

        assert!(matches!(
            brute_force_leader(&Matrix::zeros(3, 2), 0.5, 100),
            Err(Error::OracleDimensions(_))
        ));
    }

    #[test]
    fn brute_force_agrees_with_cbp_on_small_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (n, m, grid) in [(2, 2, DEFAULT_GRID), (3, 1, 250_000), (4, 1, 64_000)] {
            for _ in 0..5 {
                let l = Matrix::from_fn(n, m, |_, _| rng.gen_range(0.0..8.0));
                let eta = rng.gen_range(0.05..1.0);
                let (v, _) = brute_force_leader(&l, eta, grid).unwrap();
                let c = solve_cbp(&CumulativeLoss::new(l).unwrap(), eta, &SolverConfig::default()).unwrap();
                assert!((v - c.objective).abs() < 1e-7, "{n}x{m}: {v} vs {}", c.objective);
            }
        }
    }

    #[test]
    fn gap_inequality_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let p = random_params(n, 1, &mut rng);
            assert!(verify_gap_inequality(&p).unwrap().min_slack >= -1e-12);
        }
        let p = preset("synthetic_003").unwrap();
        let r = verify_gap_inequality(&p).unwrap();
        assert_eq!(r.actions_checked, 30240);
        assert!(r.min_slack >= -1e-12);
        // The identity list has zero regret and zero gap.
        assert_eq!(expected_regret(&p, &Action::identity(p.dims())), 0.0);
    }

    #[test]
    fn regret_examples() {
        let p = preset("synthetic_003").unwrap();
        let best = Action::identity(p.dims());
        assert!(stochastic_regret(&p, &vec![best; 5]).iter().all(|&r| r == 0.0));

        let p = StochasticParams::new(vec![0.9, 0.6, 0.2], vec![0.7]).unwrap();
        let d = p.dims();
        let r = stochastic_regret(&p, &[Action::new(vec![2], d).unwrap()]);
        assert!((r[0] - 0.7 * (0.9 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn hindsight_matches_enumeration_and_linmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = ProblemDims::new(5, 3).unwrap();
        let all = enumerate_actions(d).unwrap();
        for _ in 0..20 {
            let loss = Matrix::from_fn(5, 3, |_, _| rng.gen::<f64>());
            let (a, v) = best_in_hindsight(&loss).unwrap();
            let brute = all.iter().map(|a| a.dot(&loss)).fold(f64::INFINITY, f64::min);
            assert_eq!(v, brute);
            assert!((linmin(&loss, d).unwrap().dot(&loss) - v).abs() < 1e-12);
            assert_eq!(a.dot(&loss), v);
        }

        let trace: Vec<(Action, Matrix)> = (0..6)
            .map(|t| {
                let loss = Matrix::from_fn(5, 3, |i, j| ((i + j + t) % 3) as f64 / 2.0);
                (all[t * 7 % all.len()].clone(), loss)
            })
            .collect();
        let r = hindsight_regret(&trace).unwrap();
        let mut cum = Matrix::zeros(5, 3);
        let mut played = 0.0;
        for (t, (a, l)) in trace.iter().enumerate() {
            cum.add_assign(l);
            played += a.dot(l);
            let best = all.iter().map(|a| a.dot(&cum)).fold(f64::INFINITY, f64::min);
            assert!((r[t] - (played - best)).abs() < 1e-12);
        }
    }

    #[test]
    fn tracker_modes() {
        let p = preset("synthetic_003").unwrap();
        let env = Environment::Stochastic(p.clone());
        let mut tr = RegretTracker::new(&env);
        let a = Action::new(vec![5, 1, 2, 3, 4], p.dims()).unwrap();
        tr.record(&env, 1, &a);
        assert!((tr.regret().unwrap() - expected_regret(&p, &a)).abs() < 1e-15);

        // Expected-loss hindsight regret of the same list equals the
        // stochastic regret when the environment never changes.
        let swap = Environment::PeriodicSwap {
            params: p.clone(),
            phase_length: 1000,
        };
        let mut tr = RegretTracker::new(&swap);
        tr.record(&swap, 1, &a);
        assert!((tr.regret().unwrap() - expected_regret(&p, &a)).abs() < 1e-12);
    }
}
