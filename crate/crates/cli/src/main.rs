use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mec_pricing::equilibrium::solve_delta_default;
use mec_pricing::experiment::{load_system, run_experiment, validate_config, Simulation};
use mec_pricing::pricing_differentiated::{solve_algorithm2, solve_p3, DEFAULT_MAX_ITER};
use mec_pricing::pricing_uniform::solve_p2;
use mec_pricing::simulator::{deviation_check, estimate_profit, SampleMode};
use mec_pricing::{CacheSet, PriceVector, SystemConfig};
use serde_json::json;

/// Caching, pricing and offloading solvers for a single edge server.
#[derive(Parser)]
#[command(name = "mec-pricing", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with a system configuration (bare or under `[system]`).
    #[arg(long)]
    config: PathBuf,
    /// Price tolerance in s/cycle.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal uniform price and the cache it induces.
    SolveUniform {
        #[command(flatten)]
        common: Common,
    },
    /// Differentiated prices, searching the best cache unless one is given.
    SolveDiff {
        #[command(flatten)]
        common: Common,
        /// Comma-separated cached program indices.
        #[arg(long, value_delimiter = ',')]
        cache: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Offloading equilibrium at given prices.
    Equilibrium {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated prices in s/cycle, one per program.
        #[arg(long, value_delimiter = ',', required = true)]
        prices: Vec<f64>,
    },
    /// Monte Carlo check of profit, offload rates and deviations.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Prices to simulate; defaults to the differentiated optimum.
        #[arg(long, value_delimiter = ',')]
        prices: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        cache: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        replications: u64,
    },
    /// Run an experiment file and write its CSV and metadata.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Directory the output path is resolved against.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check an experiment file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn tolerance(config: &SystemConfig, tol: Option<f64>) -> f64 {
    tol.unwrap_or_else(|| config.default_price_tolerance())
}

fn cache_set(config: &SystemConfig, cache: Option<Vec<usize>>) -> Result<CacheSet> {
    let n = config.num_programs();
    match cache {
        None => Ok(CacheSet::full(n)),
        Some(c) => {
            if let Some(j) = c.iter().find(|&&j| j >= n) {
                bail!("cache lists program {j}, but the catalog has {n} programs");
            }
            Ok(CacheSet::from_indices(n, &c))
        }
    }
}

fn print(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveUniform { common } => {
            let config = load_system(&common.config)?;
            print(&solve_p2(&config, tolerance(&config, common.tol))?)
        }
        Command::SolveDiff { common, cache, max_iter } => {
            let config = load_system(&common.config)?;
            let tol = tolerance(&config, common.tol);
            let result = match cache {
                Some(_) => solve_algorithm2(&config, &cache_set(&config, cache)?, None, tol, max_iter)?,
                None => solve_p3(&config, tol, max_iter)?,
            };
            if !result.converged {
                eprintln!("warning: price iteration stopped after {} sweeps without converging", result.iterations);
            }
            print(&result)
        }
        Command::Equilibrium { config, prices } => {
            let config = load_system(&config)?;
            print(&solve_delta_default(&config, &prices)?)
        }
        Command::Simulate { common, prices, cache, seed, replications } => {
            let config = load_system(&common.config)?;
            let (prices, cache) = match prices {
                Some(p) => {
                    let cache = cache_set(&config, cache)?;
                    (PriceVector::with_sentinel(&config, &cache, |j| p.get(j).copied().unwrap_or(f64::NAN)), cache)
                }
                None => {
                    let r = solve_p3(&config, tolerance(&config, common.tol), DEFAULT_MAX_ITER)?;
                    (r.prices, r.cache)
                }
            };
            let report = estimate_profit(&config, &prices, &cache, &SampleMode::Prior, replications, seed)?;
            let deviation = deviation_check(&config, &prices, &cache, report.delta, replications, seed)?;
            print(&json!({ "prices": prices, "cache": cache, "report": report, "deviation": deviation }))
        }
        Command::Sweep { config, out, seed, replications, tol } => {
            let validated = validate_config(&config)?;
            for w in &validated.warnings {
                eprintln!("warning: {w}");
            }
            let mut spec = validated.spec;
            if seed.is_some() || replications.is_some() {
                let sim = spec.simulation.get_or_insert(Simulation {
                    replications: 10_000,
                    seed: 0,
                    sampling: SampleMode::Prior,
                });
                sim.seed = seed.unwrap_or(sim.seed);
                sim.replications = replications.unwrap_or(sim.replications);
            }
            if tol.is_some() {
                spec.solver.price_tolerance = tol;
            }
            let output = run_experiment(&spec, out.as_deref())?;
            let flagged = output.rows.iter().filter(|r| r[1] != "ok").count();
            if flagged > 0 {
                eprintln!("warning: {flagged} grid points did not solve cleanly; see the status column");
            }
            print(&json!({
                "csv": output.csv_path,
                "meta": output.meta_path,
                "rows": output.rows.len(),
                "flagged": flagged,
            }))
        }
        Command::Validate { config } => {
            let validated = validate_config(&config).with_context(|| format!("validating {}", config.display()))?;
            for w in &validated.warnings {
                eprintln!("warning: {w}");
            }
            print(&json!({ "name": validated.spec.name, "valid": true, "warnings": validated.warnings }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
