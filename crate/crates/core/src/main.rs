use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rheo-afem", version, about = "Adaptive finite elements for implicitly constituted fluids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop described by a configuration file.
    Solve {
        config: PathBuf,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override a configuration value, e.g. `--set afem.theta=0.3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, output, set, quiet } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let code = rheo_afem::run::run_from_text(&text, &set, output.as_deref(), quiet);
            ExitCode::from(code as u8)
        }
    }
}
