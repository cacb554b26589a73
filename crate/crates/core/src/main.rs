use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rlck_mor::pipeline::{load_config, run_logged};

#[derive(Parser)]
#[command(name = "rlck-mor", version, about = "Balanced-truncation reduction of RLCk interconnect models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce the model named in a configuration file and verify the result.
    Reduce {
        config: PathBuf,
        /// Validate the configuration and print the effective settings.
        #[arg(long)]
        dry_run: bool,
        /// Echo the run log to stderr.
        #[arg(long, short)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    let Command::Reduce {
        config,
        dry_run,
        verbose,
    } = Cli::parse().command;
    let cfg = match load_config(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if dry_run {
        print!("{}", cfg.dump());
        return ExitCode::SUCCESS;
    }
    match run_logged(&cfg, verbose) {
        Ok(a) => {
            let s = &a.summary;
            println!(
                "{}: order {} ({:.2}% reduction); report in {}",
                s.model,
                s.rom_order,
                s.reduction_pct,
                a.report.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
