use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use airvel::harness::output::{write_montecarlo_files, write_observability_file, write_trace_file};
use airvel::harness::{load_config, run_montecarlo, run_single, HarnessError, SimConfig};
use airvel::observability::{observability_verdict, DEFAULT_QUAD_STEP, DEFAULT_WINDOW};
use airvel::parallel::Execution;

#[derive(Parser)]
#[command(name = "airvel", version, about = "Air-velocity, attitude and altitude observer simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated flight and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        run_index: u64,
    },
    /// Run the Monte Carlo sweep and write summaries and traces.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep observability Gramian windows over the configured trajectory.
    Observability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn load(path: &Path, seed: Option<u64>, runs: Option<usize>) -> Result<SimConfig, HarnessError> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Simulate { config, seed, out, run_index } => {
            let cfg = load(&config, seed, None)?;
            let res = run_single(&cfg, run_index)?;
            let path = write_trace_file(&out, run_index, &res.metrics)?;
            let last = res.metrics.rows.last().expect("schedule has at least one tick");
            println!(
                "run {run_index}: t = {:.3} s, err_v_body = {:.4e}, err_att = {:.4e}, err_h = {:.4e} -> {}",
                last.t,
                last.err_v_body,
                last.err_att,
                last.err_h,
                path.display()
            );
            if let Some(why) = res.divergence {
                eprintln!("diverged: {why}");
                return Ok(EXIT_DIVERGED);
            }
            Ok(0)
        }
        Command::Montecarlo { config, runs, seed, out } => {
            let cfg = load(&config, seed, runs)?;
            let (summary, results) = run_montecarlo(&cfg, Execution::Parallel)?;
            write_montecarlo_files(&out, &summary, &results)?;
            println!("{:>4} {:>14} {:>14} {:>14}", "run", "err_v_body", "err_att", "err_h");
            for r in &summary.runs {
                let flag = if r.divergence.is_some() { " diverged" } else { "" };
                println!(
                    "{:>4} {:>14.4e} {:>14.4e} {:>14.4e}{flag}",
                    r.run_index, r.final_err_v_body, r.final_err_att, r.final_err_h
                );
            }
            println!("divergences: {}/{}; outputs in {}", summary.divergences, cfg.runs, out.display());
            Ok(if summary.divergences > 0 { EXIT_DIVERGED } else { 0 })
        }
        Command::Observability { config, window, out } => {
            let cfg = load(&config, None, None)?;
            let step = DEFAULT_QUAD_STEP.min(window / 100.0);
            let sweep = observability_verdict(
                &cfg.trajectory,
                &cfg.probes,
                &cfg.mag_ref,
                window,
                step,
                cfg.obs_threshold,
                Execution::Parallel,
            )
            .map_err(|e| match e {
                airvel::observability::ObservabilityError::Dynamics(_) => HarnessError::Observability(e),
                other => HarnessError::Validation(other.to_string()),
            })?;
            let path = write_observability_file(&out, &sweep)?;
            println!("{:>8} {:>12} {:>12} {:>12} {:>8}", "t_start", "lam_min_W", "mu_pi", "mu_api", "verdict");
            for w in &sweep.windows {
                println!(
                    "{:>8.2} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}",
                    w.t_start, w.lambda_min, w.mu_pi, w.mu_api, w.verdict
                );
            }
            println!("observable: {} (threshold {:e}) -> {}", sweep.verdict, sweep.threshold, path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::Parse { .. } | HarnessError::Validation(_) => EXIT_VALIDATION,
                _ => EXIT_FAILURE,
            })
        }
    }
}
