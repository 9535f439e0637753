//! Sampling an action whose expected matrix equals a given allocation.
//!
//! The allocation is completed to an `n x n` doubly stochastic matrix and
//! written as a convex combination of permutation matrices
//! (Birkhoff-von Neumann). Drawing a permutation with the mixture weights and
//! reading off the items placed at the first `m` positions gives an unbiased
//! action.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::polytope::{complete_to_doubly_stochastic, positive_support_matching, DoublyStochastic, SUPPORT_TOL};
use crate::types::{Action, Allocation};

/// Stop peeling once the remaining mass (entrywise 1-norm) is this small.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Remaining mass that may still be folded into the weights when no further
/// positive-support permutation exists.
const FOLD_LIMIT: f64 = 1e-6;

/// `W = sum_k gamma_k P_k` with `perm[row] = column` for each `P_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    terms: Vec<(f64, Vec<usize>)>,
}

impl Decomposition {
    pub fn terms(&self) -> &[(f64, Vec<usize>)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `sum_k gamma_k P_k`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.terms.first().map_or(0, |(_, p)| p.len());
        let mut w = Matrix::zeros(n, n);
        for (gamma, perm) in &self.terms {
            for (i, &j) in perm.iter().enumerate() {
                w.as_mut_slice()[i * n + j] += gamma;
            }
        }
        w
    }

    /// Draws one permutation with probability `gamma_k`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        if self.terms.len() == 1 {
            return &self.terms[0].1;
        }
        let dist = WeightedIndex::new(self.terms.iter().map(|(g, _)| *g))
            .expect("weights are positive");
        &self.terms[dist.sample(rng)].1
    }
}

/// Birkhoff-von Neumann decomposition by repeated extraction of a
/// positive-support permutation, weighted by its smallest entry.
///
/// Entries at or below [`SUPPORT_TOL`] are treated as zero. Mass left over
/// once the residual drops below [`RESIDUAL_TOL`] is folded back by
/// renormalising the weights. The result has at most `n^2 - 2n + 2` terms.
pub fn decompose(w: &DoublyStochastic) -> Result<Decomposition> {
    let n = w.size();
    let mut r = w.matrix().map(|v| if v > SUPPORT_TOL { v } else { 0.0 });
    let max_terms = if n <= 1 { 1 } else { n * n - 2 * n + 2 };
    let mut terms: Vec<(f64, Vec<usize>)> = Vec::new();

    loop {
        let residual = r.sum();
        if residual <= RESIDUAL_TOL || terms.len() == max_terms {
            break;
        }
        let perm = match positive_support_matching(&r, SUPPORT_TOL) {
            Ok(p) => p,
            Err(Error::NoPerfectMatching { .. }) if residual <= FOLD_LIMIT => break,
            Err(e) => return Err(e),
        };
        let gamma = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| r[(i, j)])
            .fold(f64::INFINITY, f64::min);
        for (i, &j) in perm.iter().enumerate() {
            let v = &mut r.as_mut_slice()[i * n + j];
            *v -= gamma;
            if *v <= SUPPORT_TOL {
                *v = 0.0;
            }
        }
        terms.push((gamma, perm));
    }

    let total: f64 = terms.iter().map(|(g, _)| g).sum();
    if terms.is_empty() || !(total > 0.0) {
        return Err(Error::NoPerfectMatching {
            threshold: SUPPORT_TOL,
            residual: r.sum(),
        });
    }
    for (g, _) in &mut terms {
        *g /= total;
    }
    Ok(Decomposition { terms })
}

/// Samples an action with `E[action matrix] = x`.
pub fn sample_action<R: Rng + ?Sized>(x: &Allocation, rng: &mut R) -> Result<Action> {
    let d = decompose(&complete_to_doubly_stochastic(x))?;
    Ok(action_from_permutation(d.sample(rng), x.dims().m()))
}

/// The item at position `j` is the row mapped to column `j`.
pub fn action_from_permutation(perm: &[usize], m: usize) -> Action {
    let mut items = vec![usize::MAX; m];
    for (i, &j) in perm.iter().enumerate() {
        if j < m {
            items[j] = i;
        }
    }
    Action::from_items_unchecked(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProblemDims;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(rows: &[&[f64]]) -> DoublyStochastic {
        DoublyStochastic::new(Matrix::from_rows(rows).unwrap(), 1e-12).unwrap()
    }

    fn random_birkhoff(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
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

    #[test]
    fn permutation_matrix_is_one_term() {
        let w = ds(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let d = decompose(&w).unwrap();
        assert_eq!(d.terms(), &[(1.0, vec![1, 2, 0])]);
    }

    #[test]
    fn half_half_splits_into_identity_and_swap() {
        let d = decompose(&ds(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert_eq!(d.terms(), &[(0.5, vec![0, 1]), (0.5, vec![1, 0])]);
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = DoublyStochastic::new(random_birkhoff(7, 12, &mut rng), 1e-9).unwrap();
        assert_eq!(decompose(&w).unwrap(), decompose(&w).unwrap());
    }

    #[test]
    fn action_matrix_samples_itself() {
        let d = ProblemDims::new(5, 3).unwrap();
        let a = Action::new(vec![4, 0, 2], d).unwrap();
        let x = Allocation::from_action(&a, d);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(sample_action(&x, &mut rng).unwrap(), a);
        }
    }

    #[test]
    fn two_item_frequency() {
        let d = ProblemDims::new(2, 1).unwrap();
        let x = Allocation::new(Matrix::from_rows(&[[0.7], [0.3]]).unwrap(), d, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_action(&x, &mut rng).unwrap().items()[0] == 0)
            .count();
        let sigma = (0.7f64 * 0.3 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.7).abs() < 3.0 * sigma);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstructs_random_birkhoff(seed in any::<u64>(), n in 1usize..=8, k in 1usize..=20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_birkhoff(n, k, &mut rng);
            let d = decompose(&DoublyStochastic::new(w.clone(), 1e-9).unwrap()).unwrap();
            prop_assert!(d.len() <= (n * n).saturating_sub(2 * n) + 2);
            prop_assert!(d.reconstruct().max_abs_diff(&w) <= 1e-8);
            let total: f64 = d.terms().iter().map(|(g, _)| g).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(d.terms().iter().all(|(g, _)| *g > 0.0));
        }

        #[test]
        fn sampled_actions_are_valid(seed in any::<u64>(), n in 1usize..=6, m_off in 0usize..6) {
            let m = 1 + m_off % n;
            let d = ProblemDims::new(n, m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_birkhoff(n, 6, &mut rng);
            let x = Matrix::from_fn(n, m, |i, j| w[(i, j)]);
            let x = Allocation::new(x, d, 1e-9).unwrap();
            let a = sample_action(&x, &mut rng).unwrap();
            prop_assert!(Action::new(a.items().to_vec(), d).is_ok());
            for (j, &i) in a.items().iter().enumerate() {
                prop_assert!(x.get(i, j) > 0.0);
            }
        }
    }
}
