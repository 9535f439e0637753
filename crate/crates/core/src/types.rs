//! Shared domain types: dimensions, ranked lists, allocations and losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Number of items `n` and number of positions `m`, with `1 <= m <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDims", into = "RawDims")]
pub struct ProblemDims {
    n: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct RawDims {
    n: usize,
    m: usize,
}

impl TryFrom<RawDims> for ProblemDims {
    type Error = Error;

    fn try_from(raw: RawDims) -> Result<Self> {
        ProblemDims::new(raw.n, raw.m)
    }
}

impl From<ProblemDims> for RawDims {
    fn from(d: ProblemDims) -> Self {
        RawDims { n: d.n, m: d.m }
    }
}

impl ProblemDims {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Dimensions("m must be at least 1".into()));
        }
        if m > n {
            return Err(Error::Dimensions(format!(
                "m = {m} exceeds the number of items n = {n}"
            )));
        }
        Ok(ProblemDims { n, m })
    }

    /// Item count.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Position count.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of ranked lists, `n! / (n - m)!`, saturating at `u128::MAX`.
    pub fn action_count(&self) -> u128 {
        ((self.n - self.m + 1)..=self.n)
            .map(|k| k as u128)
            .try_fold(1u128, |acc, k| acc.checked_mul(k))
            .unwrap_or(u128::MAX)
    }

    pub(crate) fn check_shape(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.n, self.m) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.n, self.m),
                actual: format!("{}x{}", x.rows(), x.cols()),
            });
        }
        Ok(())
    }
}

/// A ranked list: `items[j]` is the item shown at position `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    items: Vec<usize>,
}

impl Action {
    pub fn new(items: Vec<usize>, dims: ProblemDims) -> Result<Self> {
        if items.len() != dims.m() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} positions", dims.m()),
                actual: format!("{} positions", items.len()),
            });
        }
        let mut seen = vec![false; dims.n()];
        for &item in &items {
            if item >= dims.n() {
                return Err(Error::ItemOutOfRange { item, n: dims.n() });
            }
            if std::mem::replace(&mut seen[item], true) {
                return Err(Error::DuplicateItem { item });
            }
        }
        Ok(Action { items })
    }

    /// Item `j` at position `j`, i.e. the optimal list for sorted parameters.
    pub fn identity(dims: ProblemDims) -> Self {
        Action {
            items: (0..dims.m()).collect(),
        }
    }

    pub(crate) fn from_items_unchecked(items: Vec<usize>) -> Self {
        Action { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Inner product with an `n x m` matrix: the sum of `r[items[j]][j]`.
    pub fn dot(&self, r: &Matrix) -> f64 {
        self.items
            .iter()
            .enumerate()
            .map(|(j, &i)| r[(i, j)])
            .sum()
    }

    /// 0/1 subpermutation matrix, one 1 per column.
    pub fn to_matrix(&self, dims: ProblemDims) -> Matrix {
        let mut x = Matrix::zeros(dims.n(), dims.m());
        for (j, &i) in self.items.iter().enumerate() {
            x[(i, j)] = 1.0;
        }
        x
    }
}

/// Converts an action to its 0/1 matrix, checking it against `dims`.
pub fn action_to_matrix(a: &Action, dims: ProblemDims) -> Result<Matrix> {
    Action::new(a.items.clone(), dims)?;
    Ok(a.to_matrix(dims))
}

/// Worst-case violations of the polytope constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest `|sum_i x[i][j] - 1|` over columns.
    pub column_residual: f64,
    /// Largest `max(0, sum_j x[i][j] - 1)` over rows.
    pub row_excess: f64,
    /// Smallest entry (negative values are violations).
    pub min_entry: f64,
    /// Largest `max(0, x[i][j] - 1)`.
    pub entry_excess: f64,
}

impl FeasibilityReport {
    pub fn worst(&self) -> f64 {
        self.column_residual
            .max(self.row_excess)
            .max((-self.min_entry).max(0.0))
            .max(self.entry_excess)
    }
}

/// Checks that `x` lies in the truncated Birkhoff polytope within `tol`.
///
/// Never fails on infeasibility; only a shape mismatch is an error.
pub fn allocation_feasible(x: &Matrix, dims: ProblemDims, tol: f64) -> Result<FeasibilityReport> {
    dims.check_shape(x)?;
    let column_residual = x
        .column_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let row_excess = x
        .row_sums()
        .iter()
        .map(|s| (s - 1.0).max(0.0))
        .fold(0.0, f64::max);
    let min_entry = x.min_entry();
    let entry_excess = (x.max_entry() - 1.0).max(0.0);
    let feasible = column_residual <= tol
        && row_excess <= tol
        && min_entry >= -tol
        && entry_excess <= tol;
    Ok(FeasibilityReport {
        feasible,
        column_residual,
        row_excess,
        min_entry,
        entry_excess,
    })
}

/// A point of the truncated Birkhoff polytope: an `n x m` matrix with unit
/// column sums and row sums at most one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    x: Matrix,
    dims: ProblemDims,
}

impl Allocation {
    /// Wraps `x` after checking feasibility at `tol`.
    pub fn new(x: Matrix, dims: ProblemDims, tol: f64) -> Result<Self> {
        let report = allocation_feasible(&x, dims, tol)?;
        if !report.feasible {
            return Err(Error::Domain(format!(
                "allocation infeasible (worst violation {:e})",
                report.worst()
            )));
        }
        Ok(Allocation { x, dims })
    }

    pub(crate) fn new_unchecked(x: Matrix, dims: ProblemDims) -> Self {
        debug_assert_eq!(x.shape(), (dims.n(), dims.m()));
        Allocation { x, dims }
    }

    /// Every entry `1/n`.
    pub fn uniform(dims: ProblemDims) -> Self {
        Allocation {
            x: Matrix::filled(dims.n(), dims.m(), 1.0 / dims.n() as f64),
            dims,
        }
    }

    pub fn from_action(a: &Action, dims: ProblemDims) -> Self {
        Allocation {
            x: a.to_matrix(dims),
            dims,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.x
    }

    pub fn into_matrix(self) -> Matrix {
        self.x
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn get(&self, item: usize, position: usize) -> f64 {
        self.x[(item, position)]
    }

    pub fn feasibility(&self, tol: f64) -> FeasibilityReport {
        allocation_feasible(&self.x, self.dims, tol).expect("shape checked at construction")
    }
}

/// Per-round losses in `[0, 1]`; `0` means the user clicked.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix(Matrix);

impl LossMatrix {
    pub fn new(ell: Matrix) -> Result<Self> {
        if let Some(v) = ell
            .as_slice()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!("loss entry {v} outside [0, 1]")));
        }
        Ok(LossMatrix(ell))
    }

    pub(crate) fn new_unchecked(ell: Matrix) -> Self {
        LossMatrix(ell)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Losses observed under semi-bandit feedback for `action`.
    pub fn observe(&self, action: &Action) -> Vec<f64> {
        action
            .items()
            .iter()
            .enumerate()
            .map(|(j, &i)| self.0[(i, j)])
            .collect()
    }
}

/// Importance-weighted loss estimate for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedLoss {
    pub(crate) ell_hat: Matrix,
    /// Set when a played entry fell below the allocation floor and its
    /// denominator was clamped.
    pub clamped: bool,
}

impl EstimatedLoss {
    pub fn new(ell_hat: Matrix) -> Result<Self> {
        if ell_hat.min_entry() < 0.0 || !ell_hat.is_finite() {
            return Err(Error::Domain(
                "estimated losses must be finite and nonnegative".into(),
            ));
        }
        Ok(EstimatedLoss {
            ell_hat,
            clamped: false,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.ell_hat
    }
}

/// Running sum of estimated losses; entrywise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLoss(Matrix);

impl CumulativeLoss {
    pub fn zeros(dims: ProblemDims) -> Self {
        CumulativeLoss(Matrix::zeros(dims.n(), dims.m()))
    }

    pub fn new(l: Matrix) -> Result<Self> {
        if l.min_entry() < 0.0 || !l.is_finite() {
            return Err(Error::Domain(
                "cumulative loss must be finite and nonnegative".into(),
            ));
        }
        Ok(CumulativeLoss(l))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn accumulate(&mut self, increment: &EstimatedLoss) {
        self.0.add_assign(&increment.ell_hat);
    }
}
