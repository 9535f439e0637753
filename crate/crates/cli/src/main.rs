use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pbm_core::env::{preset, PRESETS};
use pbm_core::harness::{check_invariants, parse_matrix, run_experiment, ExperimentConfig, SUITES};
use pbm_core::polytope::{complete_to_doubly_stochastic, DoublyStochastic};
use pbm_core::sampler::decompose;
use pbm_core::solver::{FwStep, Route, SolverConfig};
use pbm_core::{Allocation, Error, ProblemDims};

/// Input tolerance for matrices read from text files.
const FILE_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "pbm", version, about = "FTRL-PBM experiments and invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Override base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output_path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the solver route.
        #[arg(long, value_parser = parse_route)]
        route: Option<Route>,
        /// Override the Frank-Wolfe step rule (open_loop or pairwise).
        #[arg(long, value_parser = parse_fw_step)]
        fw_step: Option<FwStep>,
        /// Write a row for every round.
        #[arg(long)]
        full_log: bool,
    },
    /// Run an invariant suite, or `all`.
    Check {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frank-Wolfe step rule used by `solver-agree`.
        #[arg(long, value_parser = parse_fw_step)]
        fw_step: Option<FwStep>,
    },
    /// List the named parameter sets.
    Presets,
    /// Decompose the matrix in a file into permutations.
    Decompose { matrix_file: PathBuf },
}

fn parse_route(s: &str) -> Result<Route, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fw_step(s: &str) -> Result<FwStep, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status: 1 for a failed check or a run that could not finish, 2 for
/// bad input.
fn failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::UnknownSuite(_) | Error::UnknownPreset(_) => {
            ExitCode::from(2)
        }
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            route,
            fw_step,
            full_log,
        } => {
            let mut cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.output_path = o;
            }
            if let Some(r) = route {
                cfg.solver.route = r;
            }
            if let Some(f) = fw_step {
                cfg.solver.fw_step = f;
            }
            cfg.full_log |= full_log;
            match run_experiment(&cfg) {
                Ok(outcome) => {
                    if let Some(last) = outcome.summary.last() {
                        println!(
                            "t = {}: cum_regret {:.4} +- {:.4}, avg_reward {:.4} +- {:.4}",
                            last.t,
                            last.cum_regret_mean,
                            last.cum_regret_stderr,
                            last.avg_reward_mean,
                            last.avg_reward_stderr
                        );
                    }
                    for f in &outcome.files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => failure(&e),
            }
        }
        Command::Check { suite, seed, fw_step } => {
            let solver = SolverConfig {
                fw_step: fw_step.unwrap_or_default(),
                ..SolverConfig::default()
            };
            let suites: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut ok = true;
            for s in suites {
                match check_invariants(s, seed, &solver) {
                    Ok(report) => {
                        println!("{report}");
                        ok &= report.passed;
                    }
                    Err(e) => return failure(&e),
                }
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Presets => {
            for name in PRESETS {
                let p = preset(name).expect("built-in preset");
                let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                println!("{name}: n = {}, m = {}", p.dims().n(), p.dims().m());
                println!("  alpha {}", fmt(p.alpha()));
                println!("  beta  {}", fmt(p.beta()));
            }
            ExitCode::SUCCESS
        }
        Command::Decompose { matrix_file } => match decompose_file(&matrix_file) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => failure(&e),
        },
    }
}

fn decompose_file(path: &PathBuf) -> Result<(), Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let x = parse_matrix(&text)?;
    let bad = |e: Error| Error::Parse(e.to_string());
    let w = if x.rows() == x.cols() {
        DoublyStochastic::new(x.clone(), FILE_TOL).map_err(bad)?
    } else {
        let dims = ProblemDims::new(x.rows(), x.cols()).map_err(bad)?;
        complete_to_doubly_stochastic(&Allocation::new(x.clone(), dims, FILE_TOL).map_err(bad)?)
    };
    let d = decompose(&w)?;
    println!("{} terms", d.len());
    for (gamma, perm) in d.terms() {
        let perm: Vec<String> = perm.iter().map(|j| j.to_string()).collect();
        println!("{gamma:.12} [{}]", perm.join(" "));
    }
    println!("max reconstruction error {:e}", d.reconstruct().max_abs_diff(w.matrix()));
    Ok(())
}
