use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perp_cli::{parse_config, run_file, ExperimentKind, Overrides, RunError};

#[derive(Parser)]
#[command(name = "perp", version, about = "Run perpetuity tail and limit-theorem experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write `<name>.csv` and `<name>.json`.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
        /// Output directory (default: `output.dir` from the config, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config without simulating.
    Validate { config: PathBuf },
    /// List the experiment kinds.
    ListExperiments,
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<14} {}", k.name(), k.describe());
            }
            ExitCode::SUCCESS
        }
        Cmd::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(source) => return fail(&RunError::Io { path: config, source }),
            };
            match parse_config(&text) {
                Ok(c) => {
                    println!("ok: {} ({})", c.name, c.kind);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e.into()),
            }
        }
        Cmd::Run { config, seed, workers, out } => {
            let ov = Overrides {
                seed,
                workers: workers.map(|w| w as usize),
                out,
            };
            let ov = match ov.with_env() {
                Ok(o) => o,
                Err(e) => return fail(&e.into()),
            };
            match run_file(&config, &ov) {
                Ok((report, paths)) => {
                    println!("{}: {} rows -> {} , {}", report.name, report.rows.len(), paths.csv.display(), paths.json.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
