//! The FTRL round loop: solve for `x_t`, sample `X_t ~ x_t`, observe the
//! played losses, form the importance-weighted estimate and accumulate it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sampler::sample_action;
use crate::solver::{solve, SolveResult, SolverConfig};
use crate::types::{Action, Allocation, CumulativeLoss, EstimatedLoss, LossMatrix, ProblemDims};
use crate::ALLOCATION_FLOOR;

/// `eta_t = 1 / (2 sqrt(t))`.
pub fn learning_rate(t: u64) -> Result<f64> {
    if t < 1 {
        return Err(Error::Domain("round index must be at least 1".into()));
    }
    Ok(0.5 / (t as f64).sqrt())
}

/// `ell_hat[i][j] = ell / x[i][j]` on the played entries, zero elsewhere.
///
/// `observed[j]` is the loss of the item shown at position `j`. Played
/// entries with `x` below [`ALLOCATION_FLOOR`] use the floor as denominator
/// and set [`EstimatedLoss::clamped`].
pub fn estimate_loss(x: &Allocation, action: &Action, observed: &[f64]) -> Result<EstimatedLoss> {
    let dims = x.dims();
    if action.len() != dims.m() || observed.len() != dims.m() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} positions", dims.m()),
            actual: format!("action {}, observed {}", action.len(), observed.len()),
        });
    }
    let mut ell_hat = Matrix::zeros(dims.n(), dims.m());
    let mut clamped = false;
    for (j, (&i, &loss)) in action.items().iter().zip(observed).enumerate() {
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::Domain(format!("observed loss {loss} outside [0, 1]")));
        }
        let mut p = x.get(i, j);
        if p < ALLOCATION_FLOOR {
            p = ALLOCATION_FLOOR;
            clamped = true;
        }
        ell_hat.as_mut_slice()[i * dims.m() + j] = loss / p;
    }
    let mut est = EstimatedLoss::new(ell_hat)?;
    est.clamped = clamped;
    Ok(est)
}

/// Outcome of the selection half of a round.
#[derive(Debug, Clone)]
pub struct Selection {
    pub solve: SolveResult,
    pub action: Action,
}

impl Selection {
    pub fn allocation(&self) -> &Allocation {
        &self.solve.x
    }
}

/// Everything produced by one full round.
#[derive(Debug, Clone)]
pub struct Round {
    pub t: u64,
    pub selection: Selection,
    pub estimate: EstimatedLoss,
}

#[derive(Debug, Clone)]
pub struct Learner {
    dims: ProblemDims,
    cfg: SolverConfig,
    t: u64,
    cumulative: CumulativeLoss,
    x_prev: Allocation,
}

impl Learner {
    pub fn new(dims: ProblemDims, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Learner {
            dims,
            cfg,
            t: 1,
            cumulative: CumulativeLoss::zeros(dims),
            x_prev: Allocation::uniform(dims),
        })
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    /// Index of the next round to be played (starts at 1).
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn cumulative_loss(&self) -> &CumulativeLoss {
        &self.cumulative
    }

    pub fn solver_config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Solves for `x_t` given the losses so far and samples an action from
    /// it. A solver result that did not converge is still used; the flag is
    /// carried in the returned [`SolveResult`].
    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Selection> {
        let eta = learning_rate(self.t)?;
        let solve = solve(&self.cumulative, eta, &self.cfg, &self.x_prev)?;
        let action = sample_action(&solve.x, rng)?;
        self.x_prev = solve.x.clone();
        Ok(Selection { solve, action })
    }

    /// Adds `ell_hat` to the cumulative loss and advances the round.
    pub fn update(&mut self, ell_hat: &EstimatedLoss) -> Result<()> {
        let m = ell_hat.matrix();
        self.dims.check_shape(m)?;
        if m.min_entry() < 0.0 || !m.is_finite() {
            return Err(Error::Domain("estimated loss must be finite and nonnegative".into()));
        }
        self.cumulative.accumulate(ell_hat);
        self.t += 1;
        Ok(())
    }

    /// One complete round against the loss matrix `loss` of this round.
    pub fn step<R: Rng + ?Sized>(&mut self, loss: &LossMatrix, rng: &mut R) -> Result<Round> {
        self.dims.check_shape(loss.matrix())?;
        let t = self.t;
        let selection = self.select(rng)?;
        let observed = loss.observe(&selection.action);
        let estimate = estimate_loss(selection.allocation(), &selection.action, &observed)?;
        self.update(&estimate)?;
        Ok(Round {
            t,
            selection,
            estimate,
        })
    }
}
