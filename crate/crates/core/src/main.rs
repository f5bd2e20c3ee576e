use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nullctl::experiment::{run, validate, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nullctl", version, about = "Null controllability experiments for 2D Stokes / Navier-Stokes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(short, long)]
        jobs: Option<usize>,
        /// Seed override.
        #[arg(short, long)]
        seed: Option<u64>,
    },
    /// Check a config and print diagnostics.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config).map_err(|e| e.to_string())?;
            let diag = validate(&cfg);
            if diag.is_empty() {
                println!("ok");
                Ok(())
            } else {
                for d in &diag {
                    println!("{d}");
                }
                Err(format!("{} problem(s) in {}", diag.len(), config.display()))
            }
        }
        Command::Run { config, out, jobs, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config).map_err(|e| e.to_string())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .ok_or("no output directory: pass --out or set `output` in the config")?;
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
            }
            let summary = run(&cfg, &out).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?);
            Ok(())
        }
    }
}
