//! Command-line pipeline for aggregated-load dispatch.
//!
//! Stages mirror the library layers: `synth` fabricates a neighborhood
//! power trace, `estimate` turns a trace into passive Markov dynamics,
//! `solve` computes exact values and the optimal policy, `learn` does the
//! same model-free from sampled trajectories, and `dispatch` propagates an
//! initial occupancy through a policy and reports the resulting power
//! schedule and objective.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input or I/O failure, 3
//! numerical failure.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{NaiveDate, NaiveDateTime};
use clap::{Parser, Subcommand};

use zdispatch_core::dispatch::{evaluate_objective, power_profile, propagate_occupancy};
use zdispatch_core::ingest::{
    discretize, estimate_matrix, perturb_ensemble, synthesize_neighborhood,
};
use zdispatch_core::io as zio;
use zdispatch_core::math::stream_seed;
use zdispatch_core::model::Policy;
use zdispatch_core::solver::solve;
use zdispatch_core::zlearn::run_zlearning;
use zdispatch_core::{ControlConfig, ErrorClass, PassiveSource, PowerTrace};

#[derive(Parser)]
#[command(
    name = "zdispatch",
    version,
    about = "Dispatch aggregated flexible loads by KL-regularized Markov control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic neighborhood power trace.
    Synth {
        /// Output trace CSV (timestamp,power_kw).
        #[arg(long)]
        out: PathBuf,
        /// Number of households to aggregate.
        #[arg(long, default_value_t = 100)]
        houses: usize,
        /// Relative per-house noise amplitude in [0, 1].
        #[arg(long, default_value_t = 0.2)]
        noise_frac: f64,
        /// Days of 15-minute samples.
        #[arg(long, default_value_t = 14)]
        days: usize,
        /// First day of the trace.
        #[arg(long, default_value = "2021-06-01")]
        start_date: NaiveDate,
        /// Season tag carried along with the trace.
        #[arg(long)]
        season: Option<String>,
        #[arg(long, env = "ZDISPATCH_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Estimate passive dynamics from a power trace.
    Estimate {
        /// Input trace CSV (timestamp,power_kw).
        trace: PathBuf,
        /// Number of power bins; at least 2.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=4096))]
        states: u64,
        /// Additive pseudo-count applied to rows with observed exits.
        #[arg(long, default_value_t = 0.0)]
        smoothing: f64,
        /// Keep only readings on or after this day.
        #[arg(long)]
        season_from: Option<NaiveDate>,
        /// Keep only readings on or before this day.
        #[arg(long)]
        season_to: Option<NaiveDate>,
        /// Season tag stored in the matrix document.
        #[arg(long)]
        season: Option<String>,
        /// Output matrix JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for exact values and the optimal policy.
    Solve {
        /// Passive dynamics JSON.
        matrix: PathBuf,
        /// Utility schedule CSV (t,u_0,...).
        utility: PathBuf,
        /// Temperature weighting control cost against utility.
        #[arg(long)]
        gamma: f64,
        /// Output policy JSON.
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// Output values CSV (t,state,z,phi).
        #[arg(long)]
        values_out: Option<PathBuf>,
    },
    /// Learn desirability model-free from sampled passive trajectories.
    Learn {
        /// Passive dynamics JSON.
        matrix: PathBuf,
        /// Utility schedule CSV (t,u_0,...).
        utility: PathBuf,
        /// Temperature weighting control cost against utility.
        #[arg(long)]
        gamma: f64,
        /// Noise scale of the matrix ensemble trajectories are drawn from;
        /// 0 samples the matrix itself.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Ensemble size; 1 with sigma 0 means clean sampling.
        #[arg(long, default_value_t = 1)]
        ensemble: usize,
        /// Stop once the largest single-entry update falls this low.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Trajectory budget.
        #[arg(long, default_value_t = 10_000)]
        max_iters: u64,
        #[arg(long, env = "ZDISPATCH_SEED", default_value_t = 0)]
        seed: u64,
        /// Exact values CSV to track relative error against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Output run summary JSON.
        #[arg(long)]
        run_out: Option<PathBuf>,
        /// Output per-iteration error curve CSV.
        #[arg(long)]
        errors_out: Option<PathBuf>,
    },
    /// Propagate an occupancy through a policy and report the dispatch.
    Dispatch {
        /// Policy JSON.
        policy: PathBuf,
        /// Passive dynamics JSON (for geometry and objectives).
        matrix: PathBuf,
        /// Initial occupancy CSV (state,rho).
        #[arg(long)]
        initial: PathBuf,
        /// Utility schedule CSV; scores the policy and the passive
        /// dynamics on the dispatch objective. Needs --gamma.
        #[arg(long, requires = "gamma")]
        utility: Option<PathBuf>,
        /// Temperature for the objective. Needs --utility.
        #[arg(long, requires = "utility")]
        gamma: Option<f64>,
        /// Output dispatch CSV (t,expected_power_kw,rho_0,...).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Maps the first domain error in the chain onto the exit taxonomy;
/// anything else (bare I/O, JSON context) counts as invalid input.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<zdispatch_core::Error>() {
            return match e.class() {
                ErrorClass::Numerical => 3,
                ErrorClass::Validation | ErrorClass::Io => 2,
            };
        }
    }
    2
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

/// One household's uncontrolled daily profile: a slow sinusoid with a
/// faster harmonic, roughly 0.2 to 2.3 kW at 15-minute resolution.
fn household_profile(days: usize, start: NaiveDate) -> Result<PowerTrace> {
    let start = start
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists on every date");
    let timestamps: Vec<NaiveDateTime> = (0..days * 96)
        .map(|i| start + chrono::Duration::minutes(15 * i as i64))
        .collect();
    let power = (0..timestamps.len())
        .map(|i| {
            let day_frac = (i % 96) as f64 / 96.0;
            1.25 + 0.9 * (2.0 * std::f64::consts::PI * day_frac).sin()
                + 0.15 * (6.0 * std::f64::consts::PI * day_frac).sin()
        })
        .collect();
    Ok(PowerTrace::try_new(timestamps, power, None)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            houses,
            noise_frac,
            days,
            start_date,
            season,
            seed,
        } => {
            if days == 0 {
                anyhow::bail!(zdispatch_core::Error::invalid(
                    "synthesis",
                    "needs at least one day".to_string()
                ));
            }
            let base = household_profile(days, start_date)?;
            let aggregate = synthesize_neighborhood(&base, houses, noise_frac, seed)?;
            let aggregate = PowerTrace::try_new(
                aggregate.timestamps().to_vec(),
                aggregate.power_kw().to_vec(),
                season,
            )?;
            zio::write_trace(create(&out)?, &aggregate)?;
            eprintln!(
                "wrote {} readings from {houses} houses to {}",
                aggregate.len(),
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            trace,
            states,
            smoothing,
            season_from,
            season_to,
            season,
            out,
        } => {
            let mut data = zio::read_trace(open(&trace)?, season)?;
            if season_from.is_some() || season_to.is_some() {
                let from =
                    season_from.map_or(NaiveDateTime::MIN, |d| d.and_hms_opt(0, 0, 0).unwrap());
                let to =
                    season_to.map_or(NaiveDateTime::MAX, |d| d.and_hms_opt(23, 59, 59).unwrap());
                data = data.filter_date_range(from, to)?;
            }
            let (sequence, space) = discretize(&data, states as usize)?;
            let matrix = estimate_matrix(&sequence, states as usize, smoothing)?;
            let document =
                zio::MatrixDocument::new(&matrix, Some(&space), data.season().map(str::to_owned));
            zio::save_json(&out, &document)?;
            eprintln!(
                "estimated {} states from {} transitions, wrote {}",
                matrix.n_states(),
                sequence.len() - 1,
                out.display()
            );
            Ok(())
        }
        Command::Solve {
            matrix,
            utility,
            gamma,
            policy_out,
            values_out,
        } => {
            let passive = zio::read_matrix_document(open(&matrix)?)?.to_matrix()?;
            let schedule = zio::read_utility(open(&utility)?)?;
            let (table, policy) = solve(&passive, &schedule, gamma)?;
            if let Some(path) = &policy_out {
                zio::save_json(path, &zio::PolicyDocument::new(&policy))?;
            }
            if let Some(path) = &values_out {
                zio::write_values(create(path)?, &table)?;
            }
            eprintln!(
                "solved {} steps x {} states at gamma {gamma}",
                table.horizon(),
                table.n_states()
            );
            Ok(())
        }
        Command::Learn {
            matrix,
            utility,
            gamma,
            sigma,
            ensemble,
            eps,
            max_iters,
            seed,
            reference,
            run_out,
            errors_out,
        } => {
            let passive = zio::read_matrix_document(open(&matrix)?)?.to_matrix()?;
            let schedule = zio::read_utility(open(&utility)?)?;
            // sigma 0 with a single member is exact clean sampling; keep it
            // on the plain path so results there never depend on the
            // ensemble machinery.
            let source = if sigma == 0.0 && ensemble == 1 {
                PassiveSource::Clean(passive.clone())
            } else {
                PassiveSource::Ensemble(perturb_ensemble(
                    &passive,
                    ensemble,
                    sigma,
                    stream_seed(seed, 1),
                )?)
            };
            let reference_table = match &reference {
                Some(path) => Some(zio::read_values(open(path)?, gamma)?),
                None => None,
            };
            let mut config = ControlConfig::new(gamma, schedule.horizon());
            config.convergence_eps = eps;
            config.max_iterations = max_iters;
            config.rng_seed = seed;
            let run = run_zlearning(&source, &schedule, &config, reference_table.as_ref())?;
            if let Some(path) = &run_out {
                zio::save_json(path, &zio::RunDocument::new(&run))?;
            }
            if let Some(path) = &errors_out {
                zio::write_error_curve(create(path)?, &run)?;
            }
            eprintln!(
                "learned {} steps x {} states in {} iterations (converged: {})",
                run.z_hat.horizon(),
                run.z_hat.n_states(),
                run.iterations,
                run.converged
            );
            Ok(())
        }
        Command::Dispatch {
            policy,
            matrix,
            initial,
            utility,
            gamma,
            out,
        } => {
            let policy = zio::read_policy_document(open(&policy)?)?.to_policy()?;
            let matrix_doc = zio::read_matrix_document(open(&matrix)?)?;
            let passive = matrix_doc.to_matrix()?;
            let space = matrix_doc.to_state_space()?;
            let rho = zio::read_occupancy(open(&initial)?)?;
            let occupancy = propagate_occupancy(&rho, &policy)?;
            let power = space
                .as_ref()
                .map(|s| power_profile(&occupancy, s))
                .transpose()?;

            let mut summary = serde_json::json!({
                "horizon_length": occupancy.horizon(),
                "n_states": occupancy.n_states(),
            });
            if let Some(power) = &power {
                summary["expected_power_kw"] = serde_json::json!(power);
                let peak = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                summary["peak_power_kw"] = serde_json::json!(peak);
            }
            if let (Some(utility_path), Some(gamma)) = (&utility, gamma) {
                let schedule = zio::read_utility(open(utility_path)?)?;
                let j_policy = evaluate_objective(&policy, &passive, &schedule, gamma, &rho)?;
                let lazy = Policy::stationary(passive.clone(), schedule.horizon())?;
                let j_passive = evaluate_objective(&lazy, &passive, &schedule, gamma, &rho)?;
                summary["objective"] = serde_json::json!({
                    "policy": j_policy,
                    "passive": j_passive,
                });
            }
            if let Some(path) = &out {
                let power = power.as_ref().ok_or_else(|| {
                    zdispatch_core::Error::invalid(
                        "dispatch",
                        "matrix document carries no bin geometry, cannot compute power".to_string(),
                    )
                })?;
                zio::write_dispatch(create(path)?, &occupancy, power)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}
