//! Loss generators: the stochastic position-based model, its periodic
//! phase-switching variants, and the lower-bound hard instance.
//!
//! Under the PBM, showing item `i` at position `j` yields a click with
//! probability `alpha_i * beta_j`; the loss is `1 - click`, so a round's loss
//! entry is Bernoulli with mean `1 - alpha_i beta_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{Action, LossMatrix, ProblemDims};

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 3] = ["synthetic_003", "synthetic_001", "yandex"];

/// Default rounds per phase for the periodic environments.
pub const DEFAULT_PHASE_LENGTH: u64 = 100_000;

/// Item attractiveness `alpha` (length `n`) and position examination
/// probabilities `beta` (length `m`).
///
/// Valid parameters have `alpha_1 > ... > alpha_m > alpha_{m+1} >= ... >=
/// alpha_n` and `beta_1 > ... > beta_m > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct StochasticParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TryFrom<RawParams> for StochasticParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        StochasticParams::new(raw.alpha, raw.beta)
    }
}

impl StochasticParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let dims = ProblemDims::new(alpha.len(), beta.len())?;
        let (n, m) = (dims.n(), dims.m());
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::config("alpha", format!("entry {a} outside [0, 1]")));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::config("beta", format!("entry {b} outside (0, 1]")));
        }
        if beta.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config("beta", "must be strictly decreasing"));
        }
        let strict = m.min(n - 1);
        if alpha[..=strict].windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config(
                "alpha",
                "the first m + 1 entries must be strictly decreasing",
            ));
        }
        if alpha[strict..].windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::config("alpha", "entries after position m must be non-increasing"));
        }
        Ok(StochasticParams { alpha, beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn dims(&self) -> ProblemDims {
        ProblemDims::new(self.alpha.len(), self.beta.len()).expect("validated at construction")
    }

    /// `1 - alpha_i beta_j`.
    pub fn mean_loss(&self) -> Matrix {
        mean_loss(&self.alpha, &self.beta)
    }
}

fn mean_loss(alpha: &[f64], beta: &[f64]) -> Matrix {
    Matrix::from_fn(alpha.len(), beta.len(), |i, j| 1.0 - alpha[i] * beta[j])
}

/// Suboptimality gaps of placing item `i` at position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMatrix {
    pub delta: Matrix,
    /// `min_{i <= m} (alpha_i - alpha_{i+1})`, with `alpha_{n+1} = 0` when
    /// `n = m`.
    pub delta_min: f64,
    /// `min_{j <= m} (beta_j - beta_{j+1})`, with `beta_{m+1} = 0`.
    pub delta_beta: f64,
}

/// ```text
/// Delta_ij = (beta_j - beta_{j+1}) (alpha_j - alpha_i)   j < i
///            0                                          j = i
///            (beta_{j-1} - beta_j) (alpha_i - alpha_j)   j > i
/// ```
/// (1-based, `beta_{m+1} = 0`).
pub fn gap_matrix(p: &StochasticParams) -> GapMatrix {
    let (a, b) = (&p.alpha, &p.beta);
    let (n, m) = (a.len(), b.len());
    let beta_at = |j: usize| if j < m { b[j] } else { 0.0 };
    let alpha_at = |i: usize| if i < n { a[i] } else { 0.0 };
    let delta = Matrix::from_fn(n, m, |i, j| {
        use std::cmp::Ordering::*;
        match j.cmp(&i) {
            Less => (b[j] - beta_at(j + 1)) * (a[j] - a[i]),
            Equal => 0.0,
            Greater => (b[j - 1] - b[j]) * (a[i] - a[j]),
        }
    });
    let delta_min = (0..m)
        .map(|i| alpha_at(i) - alpha_at(i + 1))
        .fold(f64::INFINITY, f64::min);
    let delta_beta = (0..m)
        .map(|j| beta_at(j) - beta_at(j + 1))
        .fold(f64::INFINITY, f64::min);
    GapMatrix {
        delta,
        delta_min,
        delta_beta,
    }
}

/// The optimal ranked list (item `j` at position `j`) and its expected
/// reward `sum_j alpha_j beta_j`.
pub fn best_allocation(p: &StochasticParams) -> (Action, f64) {
    let reward = p.beta.iter().zip(&p.alpha).map(|(b, a)| a * b).sum();
    (Action::identity(p.dims()), reward)
}

/// The parameter sets of the synthetic and Yandex experiments.
pub fn preset(name: &str) -> Result<StochasticParams> {
    let synthetic_beta = || (1..=5).map(|k| 1.0 / k as f64).collect::<Vec<_>>();
    // alpha_k = 0.95 - k * delta, with delta given in hundredths.
    let synthetic = |hundredths: u32| (0..10).map(|k| f64::from(95 - k * hundredths) / 100.0).collect::<Vec<_>>();
    match name {
        "synthetic_003" => StochasticParams::new(synthetic(3), synthetic_beta()),
        "synthetic_001" => StochasticParams::new(synthetic(1), synthetic_beta()),
        "yandex" => StochasticParams::new(
            vec![0.894, 0.231, 0.139, 0.0745, 0.0585, 0.0424, 0.0237, 0.0234, 0.0231, 0.0178],
            vec![0.891, 0.227, 0.0778, 0.0412, 0.0378],
        ),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Gap of the lower-bound instance, `(1/8) sqrt((n - m + 1) / T)`.
///
/// Requires `n >= max(m + 3, 2m)` and `T >= n`.
pub fn hard_instance_delta(n: usize, m: usize, horizon: u64) -> Result<f64> {
    ProblemDims::new(n, m)?;
    if n < (m + 3).max(2 * m) {
        return Err(Error::InvalidParams(format!(
            "hard instance needs n >= max(m + 3, 2m), got n = {n}, m = {m}"
        )));
    }
    if horizon < n as u64 {
        return Err(Error::InvalidParams(format!(
            "hard instance needs T >= n, got T = {horizon}, n = {n}"
        )));
    }
    let delta = ((n - m + 1) as f64 / horizon as f64).sqrt() / 8.0;
    Ok(delta.min(0.5 * (1.0 - f64::EPSILON)))
}

/// A loss generator, validated and ready to draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    /// Independent Bernoulli losses with mean `1 - alpha_i beta_j`.
    Stochastic(StochasticParams),
    /// As stochastic on odd phases; on even phases `alpha` is rotated left
    /// by `m`, so for `n = 2m` the first and last `m` items trade places.
    PeriodicSwap {
        params: StochasticParams,
        phase_length: u64,
    },
    /// As stochastic on odd phases; on even phases both `alpha` and `beta`
    /// are reversed.
    PeriodicReverse {
        params: StochasticParams,
        phase_length: u64,
    },
    /// Loss mean `1/2 - delta` where `u_j = i` and `1/2` elsewhere; Bernoulli
    /// draws unless `deterministic`.
    HardInstance {
        dims: ProblemDims,
        u: Action,
        delta: f64,
        deterministic: bool,
    },
}

impl Environment {
    pub fn dims(&self) -> ProblemDims {
        match self {
            Environment::Stochastic(p)
            | Environment::PeriodicSwap { params: p, .. }
            | Environment::PeriodicReverse { params: p, .. } => p.dims(),
            Environment::HardInstance { dims, .. } => *dims,
        }
    }

    /// Whether regret is measured with the expected PBM gaps (fixed
    /// parameters) rather than against the best list in hindsight.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Environment::Stochastic(_))
    }

    /// Phase of round `t` (1-based): `ceil(t / phase_length)`.
    pub fn phase(t: u64, phase_length: u64) -> u64 {
        t.div_ceil(phase_length)
    }

    /// Click-model parameters in force at round `t`, if any.
    pub fn params_at(&self, t: u64) -> Option<StochasticParams> {
        match self {
            Environment::Stochastic(p) => Some(p.clone()),
            Environment::PeriodicSwap { params, phase_length } => {
                let mut alpha = params.alpha.clone();
                if Self::phase(t, *phase_length) % 2 == 0 {
                    alpha.rotate_left(params.beta.len());
                }
                Some(StochasticParams {
                    alpha,
                    beta: params.beta.clone(),
                })
            }
            Environment::PeriodicReverse { params, phase_length } => {
                let mut p = params.clone();
                if Self::phase(t, *phase_length) % 2 == 0 {
                    p.alpha.reverse();
                    p.beta.reverse();
                }
                Some(p)
            }
            Environment::HardInstance { .. } => None,
        }
    }

    /// Expected loss matrix at round `t >= 1`.
    pub fn mean_loss(&self, t: u64) -> Matrix {
        match self {
            Environment::HardInstance { dims, u, delta, .. } => {
                Matrix::from_fn(dims.n(), dims.m(), |i, j| {
                    if u.items()[j] == i {
                        0.5 - delta
                    } else {
                        0.5
                    }
                })
            }
            _ => {
                let p = self.params_at(t).expect("parametric environment");
                mean_loss(&p.alpha, &p.beta)
            }
        }
    }

    /// Draws the full loss matrix of round `t`. Every entry consumes one
    /// uniform draw (none for a deterministic hard instance), so the
    /// generator advances identically whatever the learner plays.
    pub fn draw_loss<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> LossMatrix {
        let mean = self.mean_loss(t);
        if let Environment::HardInstance {
            deterministic: true,
            ..
        } = self
        {
            return LossMatrix::new_unchecked(mean);
        }
        LossMatrix::new_unchecked(Matrix::from_fn(mean.rows(), mean.cols(), |i, j| {
            if rng.gen::<f64>() < mean[(i, j)] {
                1.0
            } else {
                0.0
            }
        }))
    }
}

/// Environment section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub kind: EnvironmentKind,
    /// Named parameter set; alternative to giving `alpha` and `beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_length: Option<u64>,
    /// Hard instance: the favoured item per position (0-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_u: Option<Vec<usize>>,
    /// Hard instance gap; derived from `n`, `m` and the horizon if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_delta: Option<f64>,
    /// Hard instance: emit the mean losses instead of Bernoulli draws.
    #[serde(default)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Stochastic,
    PeriodicSwap,
    PeriodicReverse,
    HardInstance,
}

impl EnvironmentSpec {
    /// Checks the section against the experiment's `dims` and horizon and
    /// builds the generator. Errors name the offending field.
    pub fn build(&self, dims: ProblemDims, horizon: u64) -> Result<Environment> {
        let field = |f: &str| format!("environment.{f}");
        let params = || -> Result<StochasticParams> {
            let p = match (&self.preset, &self.alpha, &self.beta) {
                (Some(name), None, None) => {
                    preset(name).map_err(|e| Error::config(field("preset"), e.to_string()))?
                }
                (None, Some(a), Some(b)) => StochasticParams::new(a.clone(), b.clone()).map_err(|e| match e {
                    Error::Config { field: f, message } => Error::config(field(&f), message),
                    other => Error::config(field("alpha"), other.to_string()),
                })?,
                _ => {
                    return Err(Error::config(
                        field("preset"),
                        "give either a preset name or both alpha and beta",
                    ))
                }
            };
            if p.dims() != dims {
                return Err(Error::config(
                    field("preset"),
                    format!(
                        "parameters have n = {}, m = {} but dims are n = {}, m = {}",
                        p.dims().n(),
                        p.dims().m(),
                        dims.n(),
                        dims.m()
                    ),
                ));
            }
            Ok(p)
        };
        let phase_length = || -> Result<u64> {
            match self.phase_length.unwrap_or(DEFAULT_PHASE_LENGTH) {
                0 => Err(Error::config(field("phase_length"), "must be at least 1")),
                p => Ok(p),
            }
        };
        match self.kind {
            EnvironmentKind::Stochastic => Ok(Environment::Stochastic(params()?)),
            EnvironmentKind::PeriodicSwap => Ok(Environment::PeriodicSwap {
                params: params()?,
                phase_length: phase_length()?,
            }),
            EnvironmentKind::PeriodicReverse => Ok(Environment::PeriodicReverse {
                params: params()?,
                phase_length: phase_length()?,
            }),
            EnvironmentKind::HardInstance => {
                let items = self
                    .hard_u
                    .clone()
                    .unwrap_or_else(|| (0..dims.m()).collect());
                let u = Action::new(items, dims)
                    .map_err(|e| Error::config(field("hard_u"), e.to_string()))?;
                let delta = match self.hard_delta {
                    Some(d) => d,
                    None => hard_instance_delta(dims.n(), dims.m(), horizon)
                        .map_err(|e| Error::config(field("hard_delta"), e.to_string()))?,
                };
                if !(delta > 0.0 && delta < 0.5) {
                    return Err(Error::config(field("hard_delta"), "must lie in (0, 1/2)"));
                }
                Ok(Environment::HardInstance {
                    dims,
                    u,
                    delta,
                    deterministic: self.deterministic,
                })
            }
        }
    }
}
