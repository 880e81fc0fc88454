use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use optomech::fit::{fit_detuning_curves, fit_spectrum, FreeParams};
use optomech::io;
use optomech::langevin::{oracle_effective_dynamics, simulate, welch_psd};
use optomech::spectrum::{analytic_grid, spectrum_eq1, spectrum_full};
use optomech::thermo::{collapse_diagnostic, cooling_sweep, sideband_threshold_check};
use optomech::{effective_dynamics, Error};

use crate::config::{self, DetuningUnit};
use crate::{FitMode, SpectrumKind, TableFormat};

/// Residual level below which a sweep counts as heating-free.
const COLLAPSE_TOLERANCE: f64 = 0.01;
/// Half-width of the exported Langevin spectrum, in linewidths γ_eff.
const LANGEVIN_HALF_SPAN: f64 = 15.0;

/// Raised when every row of a sweep is dynamically unstable.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct AllUnstable(String);

pub struct Failure {
    pub code: u8,
    pub tag: &'static str,
}

/// Maps an error chain onto the exit-code contract.
pub fn classify(e: &anyhow::Error) -> Failure {
    let (code, tag) = if e.chain().any(|c| c.is::<AllUnstable>()) {
        (3, "instability")
    } else if let Some(err) = e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        match err {
            Error::DynamicalInstability { .. } => (3, "instability"),
            Error::Divergence { .. } => (3, "divergence"),
            Error::NoPeak { .. } => (4, "no-peak"),
            Error::NotConverged { .. } => (4, "not-converged"),
            Error::SingularJacobian => (4, "singular-jacobian"),
            Error::Unidentifiable { .. } => (4, "unidentifiable"),
            Error::Degenerate(_) => (4, "degenerate"),
            Error::WeakReference { .. } => (4, "weak-reference"),
            _ => (2, "input"),
        }
    } else {
        (2, "input")
    };
    Failure { code, tag }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn sweep(
    config: &str,
    dir: Option<&Path>,
    out: Option<&Path>,
    format: TableFormat,
) -> Result<()> {
    let cfg = config::load(config, dir)?;
    let rows = cooling_sweep(
        &cfg.cavity,
        &cfg.mechanics,
        cfg.powers(),
        &cfg.detunings(),
        cfg.bath_temperature,
        cfg.backaction,
    )?;
    if rows.iter().all(|r| !r.dynamics.stable) {
        return Err(AllUnstable(format!(
            "all {} sweep points are dynamically unstable",
            rows.len()
        ))
        .into());
    }
    let unstable = rows.iter().filter(|r| !r.dynamics.stable).count();
    if unstable > 0 {
        log::info!("{unstable} of {} sweep points are unstable", rows.len());
    }
    let mut w = output(out)?;
    match format {
        TableFormat::Csv => io::write_sweep_csv(&mut w, &rows)?,
        TableFormat::Json => io::write_sweep_json(&mut w, &rows)?,
    }
    w.flush()?;
    Ok(())
}

pub struct SpectrumArgs {
    pub detuning: f64,
    pub detuning_unit: DetuningUnit,
    pub power: Option<f64>,
    pub kind: SpectrumKind,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub points: usize,
    pub out: PathBuf,
    pub trajectory: Option<PathBuf>,
}

pub fn spectrum(config: &str, dir: Option<&Path>, args: SpectrumArgs) -> Result<()> {
    let cfg = config::load(config, dir)?;
    let detuning = args.detuning
        * match args.detuning_unit {
            DetuningUnit::RadS => 1.0,
            DetuningUnit::OmegaM => cfg.mechanics.omega_m(),
            DetuningUnit::Kappa => cfg.cavity.linewidth(),
        };
    let power = args
        .power
        .unwrap_or_else(|| cfg.powers().iter().copied().fold(0.0, f64::max));
    let op = cfg.operating_point(detuning, power)?;
    let (cav, mode, kind) = (&cfg.cavity, &cfg.mechanics, cfg.backaction);
    let series = match args.kind {
        SpectrumKind::Eq1 | SpectrumKind::Full => {
            let dynamics = effective_dynamics(cav, mode, &op, kind).require_stable()?;
            let grid = analytic_grid(dynamics.omega_eff, dynamics.gamma_eff, args.points);
            if args.kind == SpectrumKind::Eq1 {
                spectrum_eq1(
                    mode,
                    dynamics.omega_eff,
                    dynamics.gamma_eff,
                    op.bath_temperature,
                    &grid,
                )?
            } else {
                spectrum_full(cav, mode, &op, kind, &grid)?
            }
        }
        SpectrumKind::Langevin => {
            let sim = cfg.sim_config(args.seed, args.duration);
            let traj = simulate(cav, mode, &op, kind, &sim)?;
            if let Some(path) = &args.trajectory {
                let file = File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?;
                io::write_trajectory(BufWriter::new(file), &traj)?;
            }
            let est = oracle_effective_dynamics(&traj)?;
            let half = LANGEVIN_HALF_SPAN * est.gamma_eff;
            welch_psd(&traj, est.segment_length, 0.5)?
                .window((est.omega_eff - half).max(0.0), est.omega_eff + half)?
                .with_meta("seed", sim.seed as f64)
                .with_meta("dt_s", sim.dt)
        }
    };
    let series = series
        .with_meta("detuning_rad_s", op.detuning)
        .with_meta("power_W", op.power)
        .with_meta("bath_temperature_K", op.bath_temperature);
    io::write_spectrum_csv(&args.out, &series)?;
    Ok(())
}

pub struct FitArgs {
    pub spectrum: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub mode: Option<FitMode>,
    pub config: Option<String>,
    pub config_dir: Option<PathBuf>,
    pub fix_finesse: bool,
    pub fix_mass: bool,
    pub out: Option<PathBuf>,
}

pub fn fit(args: FitArgs) -> Result<()> {
    let inferred = if args.spectrum.is_some() {
        FitMode::Spectrum
    } else {
        FitMode::Detuning
    };
    if args.mode.is_some_and(|m| m != inferred) {
        bail!("--mode does not match the input: use --spectrum with spectrum mode and --dataset with detuning mode");
    }
    let result = match (&args.spectrum, &args.dataset) {
        (Some(path), _) => fit_spectrum(&io::read_spectrum_csv(path)?)?,
        (None, Some(path)) => {
            let data = io::read_detuning_csv(path)?;
            let name = args
                .config
                .as_deref()
                .ok_or_else(|| anyhow!("detuning fits need --config for the fixed parameters"))?;
            let cfg = config::load(name, args.config_dir.as_deref())?;
            let free = FreeParams {
                finesse: !args.fix_finesse,
                mass: !args.fix_mass,
            };
            fit_detuning_curves(&data, &cfg.cavity, &cfg.mechanics, free)?
        }
        (None, None) => bail!("one of --spectrum or --dataset is required"),
    };
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
        }
        .into());
    }
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &result)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn check(config: &str, dir: Option<&Path>, table: Option<&Path>) -> Result<()> {
    let cfg = config::load(config, dir)?;
    let th = sideband_threshold_check(&cfg.cavity, &cfg.mechanics);
    let (rel, verdict) = if th.passes {
        (">", "PASS")
    } else {
        ("<=", "FAIL")
    };
    println!(
        "ω_m/κ = {:.3} {rel} {:.3}: {verdict}",
        th.ratio, th.threshold
    );
    if let Some(path) = table {
        let rows = io::read_sweep_csv(path)?;
        let d = collapse_diagnostic(&rows)?;
        let verdict = if d.collapses(COLLAPSE_TOLERANCE) {
            "no heating detected"
        } else {
            "heating detected"
        };
        println!(
            "collapse slope {:.2}, max residual {:.2}% over {} powers: {verdict}",
            d.slope,
            100.0 * d.max_residual,
            d.powers
        );
        for (p, r) in &d.per_power_mean_residual {
            println!("  P = {p} W: mean residual {:+.3}%", 100.0 * r);
        }
    }
    Ok(())
}
