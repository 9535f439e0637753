//! Experiment configuration, replicate execution, CSV output and the named
//! invariant suites behind the command-line tool.
//!
//! Seeding: replicate `r` uses the root seed `base_seed + r` (wrapping). Two
//! ChaCha8 generators are built from that seed on separate streams, stream 0
//! for environment draws and stream 1 for the sampler, so the two sequences
//! are independent and each round of the environment consumes a fixed number
//! of words. Replicates share nothing, so a replicate's trace does not depend
//! on which other replicates run or in what order.

mod checks;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::matrix::Matrix;
use crate::oracle::RegretTracker;
use crate::solver::SolverConfig;
use crate::types::ProblemDims;

pub use checks::{check_invariants, InvariantReport, SUITES};

pub const DEFAULT_RECORD_EVERY: u64 = 100;

pub const SUMMARY_FILE: &str = "summary.csv";

/// Stream of the environment generator.
pub const ENV_STREAM: u64 = 0;
/// Stream of the sampler generator.
pub const SAMPLER_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSection {
    pub n: usize,
    pub m: usize,
}

fn default_record_every() -> u64 {
    DEFAULT_RECORD_EVERY
}

/// A complete experiment, read from a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: DimsSection,
    pub environment: EnvironmentSpec,
    pub horizon: u64,
    pub replicates: u64,
    pub base_seed: u64,
    #[serde(default, alias = "solver_cfg")]
    pub solver: SolverConfig,
    pub output_path: PathBuf,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    /// Write a row for every round.
    #[serde(default)]
    pub full_log: bool,
    /// Fill `wall_ms` with elapsed time; otherwise it is written as 0 so that
    /// repeated runs give identical files.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Parses and validates a configuration. Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dims(&self) -> Result<ProblemDims> {
        let DimsSection { n, m } = self.dims;
        if m == 0 {
            return Err(Error::config("dims.m", "must be at least 1"));
        }
        if m > n {
            return Err(Error::config("dims.m", format!("m = {m} exceeds dims.n = {n}")));
        }
        ProblemDims::new(n, m)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(Error::config("output_path", "must not be empty"));
        }
        self.solver.validate()?;
        self.environment.build(dims, self.horizon)?;
        Ok(())
    }

    /// Whether round `t` produces a row.
    pub fn is_checkpoint(&self, t: u64) -> bool {
        self.full_log || t % self.record_every == 0 || t == self.horizon
    }
}

/// One row of a replicate trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: u64,
    /// Pseudo-regret accumulated up to round `t`.
    pub cum_regret: f64,
    /// Clicks collected so far divided by `t`.
    pub avg_reward: f64,
    /// Every solve since the previous row converged.
    #[serde(with = "bool_as_int")]
    pub solver_converged: bool,
    pub wall_ms: u64,
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        Ok(u8::deserialize(d)? != 0)
    }
}

/// Mean and standard error across replicates at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub t: u64,
    pub cum_regret_mean: f64,
    pub cum_regret_stderr: f64,
    pub avg_reward_mean: f64,
    pub avg_reward_stderr: f64,
    /// Fraction of replicates whose solves all converged in this interval.
    pub solver_converged_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub traces: Vec<Vec<RunRecord>>,
    pub summary: Vec<SummaryRecord>,
    pub files: Vec<PathBuf>,
}

/// The two generators of replicate `r`.
pub fn replicate_rngs(base_seed: u64, r: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let seed = base_seed.wrapping_add(r);
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(ENV_STREAM);
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(SAMPLER_STREAM);
    (env, sampler)
}

/// Runs replicate `r` of `cfg` and returns its rows.
pub fn run_replicate(cfg: &ExperimentConfig, r: u64) -> Result<Vec<RunRecord>> {
    let dims = cfg.dims()?;
    let env = cfg.environment.build(dims, cfg.horizon)?;
    run_replicate_in(cfg, &env, r)
}

fn run_replicate_in(cfg: &ExperimentConfig, env: &Environment, r: u64) -> Result<Vec<RunRecord>> {
    let (mut env_rng, mut sampler_rng) = replicate_rngs(cfg.base_seed, r);
    let mut learner = Learner::new(env.dims(), cfg.solver)?;
    let mut tracker = RegretTracker::new(env);
    let start = Instant::now();
    let mut reward = 0.0;
    let mut converged = true;
    let mut rows = Vec::new();
    for t in 1..=cfg.horizon {
        let loss = env.draw_loss(t, &mut env_rng);
        let round = learner.step(&loss, &mut sampler_rng)?;
        let action = &round.selection.action;
        reward += loss.observe(action).iter().map(|l| 1.0 - l).sum::<f64>();
        converged &= round.selection.solve.converged;
        tracker.record(env, t, action);
        if cfg.is_checkpoint(t) {
            rows.push(RunRecord {
                t,
                cum_regret: tracker.regret()?,
                avg_reward: reward / t as f64,
                solver_converged: converged,
                wall_ms: if cfg.record_wall_time {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
            converged = true;
        }
    }
    Ok(rows)
}

/// Runs every replicate (in parallel), writes `replicate_<r>.csv` for each
/// and `summary.csv` into `cfg.output_path`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dims = cfg.dims()?;
    let env = cfg.environment.build(dims, cfg.horizon)?;
    let traces = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate_in(cfg, &env, r))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&traces);

    fs::create_dir_all(&cfg.output_path)
        .map_err(|e| Error::Io(format!("{}: {e}", cfg.output_path.display())))?;
    let mut files = Vec::with_capacity(traces.len() + 1);
    for (r, trace) in traces.iter().enumerate() {
        let path = cfg.output_path.join(format!("replicate_{r}.csv"));
        write_csv(&path, trace)?;
        files.push(path);
    }
    let path = cfg.output_path.join(SUMMARY_FILE);
    write_csv(&path, &summary)?;
    files.push(path);
    Ok(ExperimentOutcome {
        traces,
        summary,
        files,
    })
}

/// Per-checkpoint mean and standard error (sample standard deviation over
/// `sqrt(replicates)`; zero for a single replicate).
pub fn summarize(traces: &[Vec<RunRecord>]) -> Vec<SummaryRecord> {
    let Some(first) = traces.first() else {
        return Vec::new();
    };
    let k = traces.len() as f64;
    let stats = |values: &[f64]| -> (f64, f64) {
        let mean = values.iter().sum::<f64>() / k;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (mean, (var / k).sqrt())
    };
    (0..first.len())
        .map(|row| {
            let regret: Vec<f64> = traces.iter().map(|tr| tr[row].cum_regret).collect();
            let reward: Vec<f64> = traces.iter().map(|tr| tr[row].avg_reward).collect();
            let conv = traces.iter().filter(|tr| tr[row].solver_converged).count() as f64;
            let (cum_regret_mean, cum_regret_stderr) = stats(&regret);
            let (avg_reward_mean, avg_reward_stderr) = stats(&reward);
            SummaryRecord {
                t: first[row].t,
                cum_regret_mean,
                cum_regret_stderr,
                avg_reward_mean,
                avg_reward_stderr,
                solver_converged_frac: conv / k,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a replicate trace written by [`run_experiment`].
pub fn read_trace(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<RunRecord>, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Parses a matrix file: a first line `n m` followed by `n` rows of `m`
/// whitespace-separated decimals.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let shape: Vec<usize> = header
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::Parse(format!("bad shape `{header}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = shape[..] else {
        return Err(Error::Parse(format!("first line must be `n m`, got `{header}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad number `{v}`", k + 1))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != cols {
            return Err(Error::Parse(format!("row {} has {} entries, expected {cols}", k + 1, row.len())));
        }
        data.extend(row);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    Matrix::from_vec(rows, cols, data)
}
