use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ordergap_cli::experiment::experiment_dir;
use ordergap_cli::report::to_json;
use ordergap_cli::verify::{self, Suite, VerifyOptions};
use ordergap_cli::{analyze, load_config, run_experiment, stop_bounds, LoadedConfig};

#[derive(Parser)]
#[command(name = "ordergap", version, about = "Order-gap diagnostics for two-operator updates")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of seed streams.
    #[arg(long)]
    seeds: Option<u64>,
    /// Override the output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run all seed streams and write traces and reports.
    Run(ConfigArgs),
    /// Print the domain analysis as JSON.
    Analyze(ConfigArgs),
    /// Print stopping-time and endpoint bounds as JSON.
    StopBounds(ConfigArgs),
    /// Run the acceptance suite: `all` or one module name.
    Verify {
        #[arg(default_value = "all")]
        suite: Suite,
        /// Seeds for the noisy stopping criteria.
        #[arg(long, default_value_t = 200)]
        noisy_seeds: u64,
    },
}

fn load(args: &ConfigArgs) -> anyhow::Result<LoadedConfig> {
    let loaded = load_config(&args.config)?;
    if args.seed.is_none() && args.seeds.is_none() {
        return Ok(loaded);
    }
    let mut config = loaded.config;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.seeds {
        config.seed_count = n;
    }
    Ok(LoadedConfig::from_config(config)?)
}

fn write_analysis(dir: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("analysis.json");
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Run(args) => {
            let loaded = load(args)?;
            let output = run_experiment(&loaded)?;
            let dir = experiment_dir(&loaded, args.out.as_deref());
            output.artifacts.write_to(&dir).with_context(|| format!("writing {}", dir.display()))?;
            if !cli.quiet {
                let s = &output.report.summary;
                eprintln!(
                    "{}: {} seeds, triggered {:.3}, mean tau {:.1}, tau violations {}/{}, endpoint violations {}/{}",
                    loaded.config.experiment_id,
                    s.seeds,
                    s.triggered_fraction,
                    s.mean_tau,
                    s.tau_violations,
                    s.tau_checked,
                    s.endpoint_violations,
                    s.endpoint_checked
                );
                for w in &output.report.analysis.warnings {
                    eprintln!("warning: {w}");
                }
                eprintln!("wrote {}", dir.display());
            }
            Ok(true)
        }
        Command::Analyze(args) | Command::StopBounds(args) => {
            let loaded = load(args)?;
            let report = match cli.command {
                Command::Analyze(_) => analyze(&loaded)?,
                _ => stop_bounds(&loaded)?,
            };
            let bytes = to_json(&report)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            if args.out.is_some() {
                write_analysis(&experiment_dir(&loaded, args.out.as_deref()), &bytes)?;
            }
            Ok(true)
        }
        Command::Verify { suite, noisy_seeds } => {
            let opts = VerifyOptions { noisy_seeds: *noisy_seeds, ..VerifyOptions::default() };
            let results = verify::run(*suite, &opts);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.ok()).count();
            if !cli.quiet {
                eprintln!("{} passed, {failed} failed", results.len() - failed);
            }
            Ok(failed == 0)
        }
    }
}
