use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rcsp::bench::{replay, run_episode, run_suite, trace_csv};
use rcsp::stats::{check_prop_c2, check_prop_c3};
use rcsp::world::build_environment_with;
use rcsp::{ControllerKind, Error, Result, SuiteConfig};

#[derive(Parser)]
#[command(name = "rcsp", version, about = "Risk-sensitive scenario planning benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single episode and print its metrics as JSON.
    Run {
        #[arg(long)]
        env: String,
        #[arg(long)]
        controller: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also print the per-step trace as CSV.
        #[arg(long)]
        verbose: bool,
    },
    /// Run the env × controller × seed product and write results.
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Re-simulate a record file and report bit-exact agreement.
    Replay {
        #[arg(long)]
        record: PathBuf,
    },
    /// Monte Carlo checks of the estimator bounds.
    Validate {
        #[arg(long, value_enum, default_value_t = Check::Both)]
        check: Check,
        #[arg(long = "n")]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long)]
        lattice_size: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default configuration document.
    Config,
    /// Print a generated environment as JSON.
    Env {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Cvar,
    Regret,
    Both,
}

fn load(path: &Option<PathBuf>) -> Result<SuiteConfig> {
    match path {
        Some(p) => SuiteConfig::load(p),
        None => Ok(SuiteConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            env,
            controller,
            seed,
            config,
            verbose,
        } => {
            let config = load(&config)?;
            let kind: ControllerKind = controller.parse()?;
            let record = run_episode(&env, kind, seed, &config)?;
            if verbose {
                print!("{}", trace_csv(&record));
            }
            let mut metrics = serde_json::to_value(&record.metrics)?;
            metrics["mean_planner_latency_ms"] = record.metrics.mean_planner_latency_ms.into();
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(true)
        }
        Command::Suite { config, out, workers } => {
            let config = load(&config)?;
            let result = run_suite(&config, &out, workers)?;
            println!(
                "{:<18} {:<22} {:>4} {:>8} {:>9} {:>8} {:>8} {:>9}",
                "env", "controller", "n", "success", "collision", "timeout", "score", "lat_ms"
            );
            for r in &result.summary {
                println!(
                    "{:<18} {:<22} {:>4} {:>8.3} {:>9.3} {:>8.3} {:>8.3} {:>9.3}",
                    r.env,
                    r.controller.as_str(),
                    r.episodes,
                    r.success,
                    r.collision,
                    r.timeout,
                    r.score,
                    r.mean_planner_latency_ms
                );
            }
            for f in &result.failures {
                eprintln!("failed {} {} {}: {}", f.env, f.controller, f.seed, f.error);
            }
            Ok(result.failures.is_empty())
        }
        Command::Replay { record } => {
            let reports = if record.is_dir() {
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&record)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<std::io::Result<_>>()?;
                paths.retain(|p| p.extension().is_some_and(|x| x == "jsonl"));
                paths.sort();
                let mut all = Vec::new();
                for p in paths {
                    all.extend(replay(&p)?);
                }
                all
            } else {
                replay(&record)?
            };
            let ok = reports.iter().all(|r| r.matched);
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(ok)
        }
        Command::Validate {
            check,
            n,
            alpha,
            delta,
            lattice_size,
            lambda,
            trials,
            seed,
        } => {
            let mut reports = Vec::new();
            if matches!(check, Check::Cvar | Check::Both) {
                reports.push(check_prop_c2(
                    n.unwrap_or(1000),
                    alpha.unwrap_or(0.1),
                    delta,
                    lattice_size.unwrap_or(25),
                    trials,
                    seed,
                    1.0,
                )?);
            }
            if matches!(check, Check::Regret | Check::Both) {
                reports.push(check_prop_c3(
                    n.unwrap_or(500),
                    alpha.unwrap_or(0.25),
                    delta,
                    lambda,
                    lattice_size.unwrap_or(10),
                    trials,
                    seed,
                )?);
            }
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(reports.iter().all(|r| r.pass))
        }
        Command::Config => {
            println!("{}", SuiteConfig::default().to_json_pretty());
            Ok(true)
        }
        Command::Env { env, seed, config } => {
            let config = load(&config)?;
            let (env, _) = build_environment_with(&env, seed, &config.world)?;
            println!("{}", serde_json::to_string_pretty(&env)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Usage(_) => 2,
                _ => 3,
            })
        }
    }
}
