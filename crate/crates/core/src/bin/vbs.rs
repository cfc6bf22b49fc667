//! Command-line front end: `simulate`, `run`, `sweep`, `selftest`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vbs::experiment::{
    load_config_value, parse_assignment, resolve_config, run, simulate, split_sweep, sweep, OUTPUT_DIR_ENV,
};
use vbs::{selftest, Result};

#[derive(Parser)]
#[command(name = "vbs", version, about = "Online learning under distribution shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set method.beta=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stream and its ground truth as CSV.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run one method on one stream.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run every point of the config's `[grid]` table.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run grid points one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

fn overrides(args: &ConfigArgs) -> Result<Vec<(String, toml::Value)>> {
    args.overrides.iter().map(|s| parse_assignment(s)).collect()
}

fn main_inner(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { cfg } => {
            let config = resolve_config(load_config_value(&cfg.config)?, &overrides(&cfg)?)?;
            let stream = simulate(&config.stream_spec(), &config.output.dir)?;
            eprintln!("wrote {} steps to {}", stream.len(), config.output.dir.display());
        }
        Command::Run { cfg } => {
            let started = std::time::Instant::now();
            let config = resolve_config(load_config_value(&cfg.config)?, &overrides(&cfg)?)?;
            let s = run(&config)?;
            println!("method={} steps={} final_mcae={:.6}", s.method, s.steps, s.final_mcae);
            if let Some(ll) = s.mean_log_lik {
                println!("mean_log_lik={ll:.6}");
            }
            eprintln!("wall time {:.3}s", started.elapsed().as_secs_f64());
        }
        Command::Sweep { cfg, sequential } => {
            let (mut base, grid) = split_sweep(load_config_value(&cfg.config)?)?;
            for (k, v) in overrides(&cfg)? {
                vbs::experiment::set_dotted(&mut base, &k, v)?;
            }
            let out = std::env::var(OUTPUT_DIR_ENV)
                .ok()
                .filter(|d| !d.is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| resolve_config(base.clone(), &[]).map(|c| c.output.dir).unwrap_or_else(|_| "vbs-out".into()));
            let rows = sweep(&base, &grid, &out, !sequential)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} points, {} failed; summary in {}", rows.len(), failed, out.join("sweep.csv").display());
            return Ok(failed == 0);
        }
        Command::Selftest => {
            let mut ok = true;
            for c in selftest::run_all() {
                println!("{} {:<45} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
