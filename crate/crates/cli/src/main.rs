use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diii_cli::presets::PRESETS;
use diii_cli::{resolve_out_dir, run, CliError, ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "diii", version, about = "Run DIII chain experiments and write their artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
    },
    /// Run a named preset with default parameters.
    Preset {
        name: String,
        /// Output directory (overrides the environment variable).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the available presets.
    List,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (cfg, flag) = match cli.command {
        Command::List => {
            for p in PRESETS {
                println!("{:<22} {:<8} {}", p.name, p.runtime.as_str(), p.description);
            }
            return Ok(());
        }
        Command::Run { config } => (ExperimentConfig::load(&config)?, None),
        Command::Preset { name, out, seed } => {
            let cfg = ExperimentConfig::preset(&name, seed);
            cfg.validate()?;
            (cfg, out)
        }
    };
    let dir = resolve_out_dir(flag.as_deref(), &cfg);
    log::debug!("output directory {} ({OUT_DIR_ENV} overrides the config)", dir.display());
    let summary = run(&cfg, &dir)?;
    println!("{}: {} ({} files in {})", cfg.experiment, if summary.pass { "PASS" } else { "FAIL" }, summary.files.len() + 1, summary.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.reason_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
