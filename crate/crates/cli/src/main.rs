use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bsam_cli::compare::compare;
use bsam_cli::config::ExperimentConfig;
use bsam_cli::presets;
use bsam_cli::runner::{run, RunOptions, Status};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsam", version, about = "Imbalanced-regression optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, optimizer, rho) cell of a config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and BSAM_OUTPUT_ROOT.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Omit the timestamp header and wall-clock values so reruns are byte-identical.
        #[arg(long)]
        no_timestamp: bool,
    },
    /// Seed-averaged per-metric, per-region comparison of two optimizers.
    Compare {
        results: PathBuf,
        baseline: String,
        candidate: String,
        /// Select one rho when an optimizer was swept.
        #[arg(long)]
        rho: Option<f64>,
        /// Where to write the comparison CSV (default: next to results).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in preset config.
    GenConfig {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(presets::NAMES))]
        preset: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, output, no_timestamp } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run(&cfg, &RunOptions { timestamp: !no_timestamp, output_dir: output })?;
            let diverged = summary.rows.iter().filter(|r| r.status == Status::Diverged).count();
            println!(
                "{}: {} rows ({} diverged) written to {}",
                summary.name,
                summary.rows.len(),
                diverged,
                summary.output_dir.display()
            );
        }
        Command::Compare { results, baseline, candidate, rho, out } => {
            let cmp = compare(&results, &baseline, &candidate, rho)?;
            let path = out.unwrap_or_else(|| {
                results.with_file_name(format!("compare_{baseline}_vs_{candidate}.csv"))
            });
            std::fs::write(&path, cmp.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", cmp.to_pretty());
        }
        Command::GenConfig { preset, out } => {
            let cfg = presets::preset(&preset).ok_or_else(|| anyhow!("unknown preset {preset:?}"))?;
            match out {
                Some(p) => std::fs::write(&p, cfg.to_toml()).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", cfg.to_toml()),
            }
        }
    }
    Ok(())
}
