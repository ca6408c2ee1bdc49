use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vanet_sybil_cli::commands;

#[derive(Parser)]
#[command(
    name = "vanet-sybil",
    version,
    about = "Sybil detection simulator for region-based VANET PKIs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, roster.csv and summary.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the [sweep] declared in the config and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the keyed-digest golden vectors and wire-format fixtures.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => commands::cmd_run(&config, seed, &out).map(|s| print!("{s}")),
        Command::Sweep { config, out } => commands::cmd_sweep(&config, &out).map(|csv| print!("{csv}")),
        Command::Validate { config } => commands::cmd_validate(&config).map(|s| println!("{s}")),
        Command::Fixtures { out } => commands::cmd_fixtures(&out).map(|paths| {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
