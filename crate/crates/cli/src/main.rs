#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Mode, Overrides};
use error::CliError;
use output::{Check, Output};

/// Collective neutrino oscillation experiments on a simulated quantum register.
#[derive(Parser)]
#[command(name = "nuflavor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Full 4-neutrino spectrum from block QLanczos runs, next to exact diagonalization.
    Spectrum,
    /// Imaginary-time energy traces for one block, with replicate runs.
    Qite,
    /// Lowest levels of one block from QLanczos.
    Qlanczos,
    /// Trotterized survival probabilities of the all-electron-flavor state.
    Evolve,
    /// Readout and zero-noise mitigation on block energies and survival probabilities.
    Mitigate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Qite => "qite",
            Command::Qlanczos => "qlanczos",
            Command::Evolve => "evolve",
            Command::Mitigate => "mitigate",
        }
    }
}

#[derive(Args)]
struct Flags {
    /// TOML config, JSON config, or a manifest from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "nuflavor-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Exact expectation values (default).
    #[arg(long, global = true, conflicts_with = "sampled")]
    exact: bool,
    /// Shot-sampled expectation values.
    #[arg(long, global = true)]
    sampled: bool,
    /// Exit with status 3 when any acceptance check fails.
    #[arg(long, global = true)]
    check: bool,
}

fn run(cli: &Cli) -> Result<Vec<Check>, CliError> {
    let f = &cli.flags;
    let mode = match (f.exact, f.sampled) {
        (true, _) => Some(Mode::Exact),
        (_, true) => Some(Mode::Sampled),
        _ => None,
    };
    let overrides = Overrides { seed: f.seed, shots: f.shots, mode };
    let config = Config::load(f.config.as_deref(), &overrides)?;
    let name = cli.command.name();
    log::info!("{name}: mode {:?}, seed {}, output {}", config.mode, config.seed, f.out.display());
    let mut out = Output::new(&f.out, name, &config)?;
    let checks = match cli.command {
        Command::Spectrum => commands::spectrum(&config, &mut out)?,
        Command::Qite => commands::qite(&config, &mut out)?,
        Command::Qlanczos => commands::qlanczos(&config, &mut out)?,
        Command::Evolve => commands::evolve(&config, &mut out)?,
        Command::Mitigate => commands::mitigate(&config, &mut out)?,
    };
    let manifest = out.finish(&checks)?;
    println!("wrote {}", manifest.display());
    Ok(checks)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(checks) => {
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if cli.flags.check && checks.iter().any(|c| !c.passed) {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("nuflavor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
