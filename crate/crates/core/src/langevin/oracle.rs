use std::f64::consts::PI;

use serde::Serialize;

use super::{welch_psd, Trajectory};
use crate::error::{Error, Result};
use crate::fit::{fit_spectrum_with, FitResult, SpectrumFitOptions};
use crate::spectrum::{estimate_peak, SpectrumSeries};

/// Bins per linewidth γ the segment length aims for.
const BINS_PER_GAMMA: f64 = 8.0;
/// Half-width of the fitted window, in linewidths.
const FIT_HALF_SPAN: f64 = 15.0;
const OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct OracleEstimate {
    #[serde(rename = "omega_eff_rad_s")]
    pub omega_eff: f64,
    #[serde(rename = "gamma_eff_rad_s")]
    pub gamma_eff: f64,
    pub omega_err: f64,
    pub gamma_err: f64,
    pub segment_length: usize,
    #[serde(skip)]
    pub spectrum: SpectrumSeries,
    pub fit: FitResult,
}

fn pow2_floor(n: usize) -> usize {
    1 << (usize::BITS - 1 - n.max(32).leading_zeros())
}

// at least 7 half-overlapping segments
fn max_segment(n: usize) -> usize {
    pow2_floor(n / 4)
}

fn segment_for(gamma: f64, sample_dt: f64, n: usize) -> usize {
    let wanted = (2.0 * PI * BINS_PER_GAMMA / (gamma * sample_dt))
        .ceil()
        .max(32.0) as usize;
    wanted.next_power_of_two().min(max_segment(n))
}

fn fit_window(
    traj: &Trajectory,
    segment: usize,
    gamma: f64,
) -> Result<(SpectrumSeries, FitResult)> {
    let psd = welch_psd(traj, segment, OVERLAP)?;
    let peak = estimate_peak(psd.omega(), psd.psd()).ok_or(Error::NoPeak { ratio: 1.0 })?;
    let half = FIT_HALF_SPAN * gamma.max(peak.gamma);
    let window = psd.window((peak.omega - half).max(0.0), peak.omega + half)?;
    // adjacent Hann bins are correlated (ρ ≈ 0.44); every other bin is not
    let window = SpectrumSeries::new(
        window.omega().iter().step_by(2).copied().collect(),
        window.psd().iter().step_by(2).copied().collect(),
        window.provenance(),
    )?;
    let fit = fit_spectrum_with(&window, SpectrumFitOptions { fit_floor: false })?;
    Ok((window, fit))
}

/// Fits the single-mode thermal line shape to the Welch PSD of the
/// displacement record.
///
/// A first pass with many averages locates the peak and its width; the
/// segment length is then chosen to put about eight bins per γ_eff on the
/// line (capped so that at least seven segments are averaged) and the
/// fit runs over every other bin within the peak ± 15γ_eff, which keeps
/// the residuals independent so the reported errors are honest.
pub fn oracle_effective_dynamics(traj: &Trajectory) -> Result<OracleEstimate> {
    let n = traj.len();
    // heavily averaged first look; a noisy line can fake a narrow width
    let coarse = welch_psd(traj, pow2_floor(n / 32), OVERLAP)?;
    let peak = estimate_peak(coarse.omega(), coarse.psd()).ok_or(Error::NoPeak { ratio: 1.0 })?;
    let mut segment = segment_for(peak.gamma, traj.sample_dt, n);
    let mut gamma = peak.gamma;
    let (mut spectrum, mut fit) = fit_window(traj, segment, gamma)?;
    for _ in 0..2 {
        let g = fit.get("gamma_eff").unwrap_or(gamma);
        let next = segment_for(g, traj.sample_dt, n);
        if next == segment {
            break;
        }
        segment = next;
        gamma = g;
        (spectrum, fit) = fit_window(traj, segment, gamma)?;
    }
    Ok(OracleEstimate {
        omega_eff: fit.get("omega_eff").unwrap_or(f64::NAN),
        gamma_eff: fit.get("gamma_eff").unwrap_or(f64::NAN),
        omega_err: fit.std_error("omega_eff").unwrap_or(f64::NAN),
        gamma_err: fit.std_error("gamma_eff").unwrap_or(f64::NAN),
        segment_length: segment,
        spectrum,
        fit,
    })
}
