//! `optomech` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 physics instability, 4 fit
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::DetuningUnit;

#[derive(Parser)]
#[command(
    name = "optomech",
    version,
    about = "Backaction cooling of a micromirror in a detuned cavity"
)]
struct Cli {
    /// Directory searched for config names that are not paths.
    #[arg(long, global = true, env = config::CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumKind {
    /// Single-mode line shape at the effective parameters.
    Eq1,
    /// Exact response with the frequency-dependent self-energy.
    Full,
    /// Welch PSD of a Langevin simulation.
    Langevin,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    Spectrum,
    Detuning,
}

#[derive(Subcommand)]
enum Command {
    /// Effective dynamics and temperature over the config's power × detuning grid.
    Sweep {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: TableFormat,
    },
    /// Displacement spectrum at one operating point.
    Spectrum {
        config: String,
        #[arg(long, allow_hyphen_values = true)]
        detuning: f64,
        #[arg(long, value_enum, default_value = "rad-s")]
        detuning_unit: DetuningUnit,
        /// Pump power in W (default: the largest power of the config).
        #[arg(long)]
        power: Option<f64>,
        #[arg(long, value_enum, default_value = "full")]
        kind: SpectrumKind,
        /// Langevin seed (default: the config's).
        #[arg(long)]
        seed: Option<u64>,
        /// Langevin recorded duration in s (default: the config's).
        #[arg(long)]
        duration: Option<f64>,
        /// Grid points of analytic spectra.
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also store the Langevin trajectory as a binary record.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Fit a spectrum CSV or a detuning dataset CSV; prints the fit as JSON.
    Fit {
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        spectrum: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<FitMode>,
        /// Template for the detuning fit (everything except F and m).
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        fix_finesse: bool,
        #[arg(long)]
        fix_mass: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolved-sideband threshold and, given a sweep table, the heating diagnostic.
    Check {
        config: String,
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let dir = cli.config_dir.as_deref();
    let result = match cli.command {
        Command::Sweep {
            config,
            out,
            format,
        } => commands::sweep(&config, dir, out.as_deref(), format),
        Command::Spectrum {
            config,
            detuning,
            detuning_unit,
            power,
            kind,
            seed,
            duration,
            points,
            out,
            trajectory,
        } => commands::spectrum(
            &config,
            dir,
            commands::SpectrumArgs {
                detuning,
                detuning_unit,
                power,
                kind,
                seed,
                duration,
                points,
                out,
                trajectory,
            },
        ),
        Command::Fit {
            spectrum,
            dataset,
            mode,
            config,
            fix_finesse,
            fix_mass,
            out,
        } => commands::fit(commands::FitArgs {
            spectrum,
            dataset,
            mode,
            config,
            config_dir: dir.map(PathBuf::from),
            fix_finesse,
            fix_mass,
            out,
        }),
        Command::Check { config, table } => commands::check(&config, dir, table.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let failure = commands::classify(&e);
            eprintln!("error ({}): {e:#}", failure.tag);
            ExitCode::from(failure.code)
        }
    }
}
