use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adactrl::harness::{run_experiment, ExperimentConfig};
use adactrl::Error;

#[derive(Parser)]
#[command(name = "adactrl", version, about = "Run seeded online-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, regret.csv and summary.json.
    Run {
        /// JSON experiment configuration.
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's output_dir, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// `path.to.key=value` applied to the JSON before parsing; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, overrides: Vec<String>) -> Result<PathBuf, Error> {
    let mut cfg = ExperimentConfig::load_with_overrides(&config, &overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let output = run_experiment(&cfg)?;
    output.write(&dir)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, overrides } => match run(config, seed, out, overrides) {
            Ok(dir) => {
                println!("wrote {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
