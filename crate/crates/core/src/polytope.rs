//! Geometry of the truncated Birkhoff polytope `Conv(X)`.
//!
//! * [`linmin`] minimises a linear function over `Conv(X)`. The minimum is
//!   attained at a vertex, so this is a min-cost assignment of the `m`
//!   positions to distinct items (Hungarian algorithm on the `n x n` cost
//!   matrix padded with zero-cost dummy positions).
//! * [`positive_support_matching`] finds a permutation living on the strictly
//!   positive entries of a (scaled) doubly stochastic matrix.
//! * [`complete_to_doubly_stochastic`] embeds an allocation into an `n x n`
//!   doubly stochastic matrix.
//! * [`bregman_divergence`] is the divergence of `f(x) = <x,1> - sum sqrt(x)`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tsallis;
use crate::types::{Action, Allocation, ProblemDims};

/// Default threshold below which an entry is not treated as support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Relative tolerance for treating a reduced cost as zero in the
/// lexicographic tie-break of [`linmin`].
const TIGHT_REL_TOL: f64 = 1e-10;

/// Square nonnegative matrix whose rows and columns all sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochastic(Matrix);

impl DoublyStochastic {
    pub fn new(w: Matrix, tol: f64) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                actual: format!("{}x{}", w.rows(), w.cols()),
            });
        }
        let worst_row = w.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let worst_col = w
            .column_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        if worst_row > tol || worst_col > tol || w.min_entry() < -tol {
            return Err(Error::Domain(format!(
                "not doubly stochastic (row residual {worst_row:e}, column residual {worst_col:e}, min entry {:e})",
                w.min_entry()
            )));
        }
        Ok(DoublyStochastic(w))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm with
/// potentials, O(n^3)).
///
/// Returns `(assignment, u, v)` where `assignment[row] = column` and the
/// potentials satisfy `cost[i][j] - u[i] - v[j] >= 0` with equality on the
/// assignment.
fn hungarian(cost: &Matrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    // 1-based arrays, index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    (assignment, u[1..].to_vec(), v[1..].to_vec())
}

/// Kuhn's augmenting-path matcher over an adjacency predicate.
///
/// Rows are processed in increasing order and each row tries columns in
/// increasing order, so the result is deterministic. `col_owner` may be
/// pre-seeded; returns `false` if some listed row stays unmatched.
fn kuhn(
    rows: &[usize],
    cols: usize,
    adjacent: &dyn Fn(usize, usize) -> bool,
    col_owner: &mut [Option<usize>],
) -> bool {
    fn try_row(
        row: usize,
        cols: usize,
        adjacent: &dyn Fn(usize, usize) -> bool,
        visited: &mut [bool],
        col_owner: &mut [Option<usize>],
    ) -> bool {
        // A free column is taken before any existing match is displaced.
        if let Some(c) = (0..cols).find(|&c| !visited[c] && col_owner[c].is_none() && adjacent(row, c)) {
            visited[c] = true;
            col_owner[c] = Some(row);
            return true;
        }
        for c in 0..cols {
            if visited[c] || !adjacent(row, c) {
                continue;
            }
            visited[c] = true;
            let free = match col_owner[c] {
                None => true,
                Some(other) => try_row(other, cols, adjacent, visited, col_owner),
            };
            if free {
                col_owner[c] = Some(row);
                return true;
            }
        }
        false
    }

    let mut visited = vec![false; cols];
    for &row in rows {
        visited.iter_mut().for_each(|v| *v = false);
        if !try_row(row, cols, adjacent, &mut visited, col_owner) {
            return false;
        }
    }
    true
}

/// Returns `argmin_X <X, r>` over ranked lists, i.e. a min-cost assignment of
/// positions to distinct items.
///
/// Among optimal lists the lexicographically smallest item sequence is
/// returned (reduced costs within a relative `1e-10` count as ties).
pub fn linmin(r: &Matrix, dims: ProblemDims) -> Result<Action> {
    dims.check_shape(r)?;
    if !r.is_finite() {
        return Err(Error::Domain("linmin cost matrix must be finite".into()));
    }
    let n = dims.n();
    let m = dims.m();
    // Rows are items, columns are positions followed by n - m dummies.
    let cost = Matrix::from_fn(n, n, |i, j| if j < m { r[(i, j)] } else { 0.0 });
    let (assignment, u, v) = hungarian(&cost);

    let scale = 1.0 + r.as_slice().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = TIGHT_REL_TOL * scale * n as f64;
    let tight = |i: usize, j: usize| cost[(i, j)] - u[i] - v[j] <= tol;

    // col_owner[j] = item matched to column j in a perfect tight matching.
    let mut col_owner: Vec<Option<usize>> = vec![None; n];
    for (i, &j) in assignment.iter().enumerate() {
        col_owner[j] = Some(i);
    }

    let mut fixed = vec![false; n];
    let mut items = Vec::with_capacity(m);
    for j in 0..m {
        let current = col_owner[j].expect("perfect matching");
        let mut chosen = current;
        for cand in 0..current {
            if fixed[cand] || !tight(cand, j) {
                continue;
            }
            // Does a perfect tight matching exist with the prefix fixed and
            // `cand` at position j?
            let mut owner: Vec<Option<usize>> = vec![None; n];
            for (jj, &it) in items.iter().enumerate() {
                owner[jj] = Some(it);
            }
            owner[j] = Some(cand);
            let rest: Vec<usize> = (0..n).filter(|&i| !fixed[i] && i != cand).collect();
            let adjacent = |i: usize, c: usize| c > j && tight(i, c);
            if kuhn(&rest, n, &adjacent, &mut owner) {
                col_owner = owner;
                chosen = cand;
                break;
            }
        }
        fixed[chosen] = true;
        items.push(chosen);
    }
    Ok(Action::from_items_unchecked(items))
}

/// Finds a permutation `pi` with `w[i][pi[i]] > threshold` for every row.
///
/// `w` is expected to be a nonnegative multiple of a doubly stochastic
/// matrix, for which such a permutation exists by Birkhoff's theorem. Rows
/// are matched in order, each trying columns in increasing order, so
/// `W = (I + swap) / 2` yields the identity.
pub fn positive_support_matching(w: &Matrix, threshold: f64) -> Result<Vec<usize>> {
    if w.rows() != w.cols() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            actual: format!("{}x{}", w.rows(), w.cols()),
        });
    }
    let n = w.rows();
    let mut col_owner = vec![None; n];
    let rows: Vec<usize> = (0..n).collect();
    let adjacent = |i: usize, j: usize| w[(i, j)] > threshold;
    if !kuhn(&rows, n, &adjacent, &mut col_owner) {
        return Err(Error::NoPerfectMatching {
            threshold,
            residual: w.sum(),
        });
    }
    let mut perm = vec![0; n];
    for (j, owner) in col_owner.iter().enumerate() {
        perm[owner.expect("perfect matching")] = j;
    }
    Ok(perm)
}

/// Pads an allocation with `n - m` columns that spread each row's unused mass
/// evenly, giving an `n x n` doubly stochastic matrix whose first `m` columns
/// equal `x`. For `m = n` the allocation is returned as is.
pub fn complete_to_doubly_stochastic(x: &Allocation) -> DoublyStochastic {
    let dims = x.dims();
    let (n, m) = (dims.n(), dims.m());
    let xm = x.matrix();
    if m == n {
        return DoublyStochastic(xm.clone());
    }
    let pad = (n - m) as f64;
    let slack: Vec<f64> = xm.row_sums().iter().map(|s| (1.0 - s) / pad).collect();
    DoublyStochastic(Matrix::from_fn(n, n, |i, j| {
        if j < m {
            xm[(i, j)]
        } else {
            slack[i]
        }
    }))
}

/// `D_f(x, y) = f(x) - f(y) - <grad f(y), x - y>` for
/// `f(x) = <x, 1> - sum sqrt(x)`, summed over entries.
///
/// Requires `x >= 0` and `y > 0` entrywise.
pub fn bregman_divergence(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", x.rows(), x.cols()),
            actual: format!("{}x{}", y.rows(), y.cols()),
        });
    }
    if x.min_entry() < 0.0 {
        return Err(Error::Domain("bregman divergence: negative entry in x".into()));
    }
    if y.min_entry() <= 0.0 {
        return Err(Error::Domain(
            "bregman divergence: y must be strictly positive".into(),
        ));
    }
    let d = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&a, &b)| {
            tsallis::legendre(a) - tsallis::legendre(b) - tsallis::legendre_grad(b) * (a - b)
        })
        .sum::<f64>();
    Ok(d.max(0.0))
}
