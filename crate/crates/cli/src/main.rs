use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Outer approximation solver for variational inequalities over split
/// feasibility sets.
///
/// Log verbosity is read from `OAM_LOG` (for example `OAM_LOG=info`).
#[derive(Parser)]
#[command(name = "oam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and print a JSON summary.
    Solve { config: PathBuf },
    /// Sample the operator invariants of the configured problem.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Overrides the `solver.seed` of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the reference solution computed by Dykstra's algorithm.
    Oracle { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OAM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                oam_cli::EXIT_CONFIG
            } else {
                0
            });
        }
    };
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = match cli.command {
        Command::Solve { config } => oam_cli::cmd_solve(&config, &mut out, &mut err),
        Command::Check {
            config,
            samples,
            seed,
        } => oam_cli::cmd_check(&config, samples, seed, &mut out, &mut err),
        Command::Oracle { config } => oam_cli::cmd_oracle(&config, &mut out, &mut err),
    };
    ExitCode::from(code)
}
