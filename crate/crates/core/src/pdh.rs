//! Pound-Drever-Hall readout: reflection, error signal, detuning-dependent
//! displacement transduction and absolute calibration against a
//! frequency-modulation reference tone.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backaction::{effective_dynamics, BackactionKind};
use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::constants::K_B;
use crate::error::{Error, Result};
use crate::fit::{fit_spectrum, peak_area};
use crate::spectrum::{check_grid, Provenance, SpectrumSeries};

/// Minimum reference-peak excess over the local baseline.
pub const MIN_REFERENCE_SNR: f64 = 10.0;
/// Exclusion zone around the mechanical peak, in linewidths 2γ_eff.
pub const REFERENCE_EXCLUSION_LINEWIDTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPdhConfig")]
pub struct PdhConfig {
    #[serde(rename = "mod_freq_rad_s")]
    mod_freq: f64,
    #[serde(rename = "mod_depth_rad")]
    mod_depth: f64,
    #[serde(rename = "ref_freq_rad_s")]
    ref_freq: f64,
    #[serde(rename = "ref_freq_deviation_Hz")]
    ref_freq_deviation: f64,
}

#[derive(Deserialize)]
struct RawPdhConfig {
    mod_freq_rad_s: f64,
    mod_depth_rad: f64,
    ref_freq_rad_s: f64,
    #[serde(rename = "ref_freq_deviation_Hz")]
    ref_freq_deviation_hz: f64,
}

impl TryFrom<RawPdhConfig> for PdhConfig {
    type Error = Error;
    fn try_from(raw: RawPdhConfig) -> Result<Self> {
        PdhConfig::new(
            raw.mod_freq_rad_s,
            raw.mod_depth_rad,
            raw.ref_freq_rad_s,
            raw.ref_freq_deviation_hz,
        )
    }
}

impl Default for PdhConfig {
    /// Ω_mod = 2π·50 MHz, β = 0.3 rad, ω_ref = 2π·1 MHz, δν_rms = 10 kHz.
    fn default() -> Self {
        Self {
            mod_freq: 2.0 * PI * 50e6,
            mod_depth: 0.3,
            ref_freq: 2.0 * PI * 1e6,
            ref_freq_deviation: 1e4,
        }
    }
}

impl PdhConfig {
    pub fn new(
        mod_freq: f64,
        mod_depth: f64,
        ref_freq: f64,
        ref_freq_deviation: f64,
    ) -> Result<Self> {
        if !(mod_freq.is_finite() && mod_freq > 0.0) {
            return Err(Error::invalid(
                "mod_freq_rad_s",
                format!("must be > 0, got {mod_freq}"),
            ));
        }
        if !(mod_depth > 0.0 && mod_depth < 1.0) {
            return Err(Error::invalid(
                "mod_depth_rad",
                format!("must be in (0, 1), got {mod_depth}"),
            ));
        }
        if !(ref_freq.is_finite() && ref_freq > 0.0) {
            return Err(Error::invalid(
                "ref_freq_rad_s",
                format!("must be > 0, got {ref_freq}"),
            ));
        }
        if !(ref_freq_deviation.is_finite() && ref_freq_deviation > 0.0) {
            return Err(Error::invalid(
                "ref_freq_deviation_Hz",
                format!("must be > 0, got {ref_freq_deviation}"),
            ));
        }
        Ok(Self {
            mod_freq,
            mod_depth,
            ref_freq,
            ref_freq_deviation,
        })
    }

    pub fn mod_freq(&self) -> f64 {
        self.mod_freq
    }

    /// Phase-modulation depth. It only sets the overall size of the raw
    /// error signal, which the unit peak-to-peak normalisation removes.
    pub fn mod_depth(&self) -> f64 {
        self.mod_depth
    }

    pub fn ref_freq(&self) -> f64 {
        self.ref_freq
    }

    pub fn ref_freq_deviation(&self) -> f64 {
        self.ref_freq_deviation
    }

    pub fn with_ref_freq(self, ref_freq: f64) -> Result<Self> {
        Self::new(
            self.mod_freq,
            self.mod_depth,
            ref_freq,
            self.ref_freq_deviation,
        )
    }

    pub fn with_ref_freq_deviation(self, deviation: f64) -> Result<Self> {
        Self::new(self.mod_freq, self.mod_depth, self.ref_freq, deviation)
    }

    /// Equivalent displacement of the reference tone, x_ref = L·δν_rms/ν_l.
    pub fn reference_displacement(&self, cav: &OpticalCavity) -> f64 {
        let geom = cav.geometry();
        geom.length() * self.ref_freq_deviation / geom.optical_frequency()
    }
}

/// Detector-side spectrum before calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSpectrum {
    #[serde(rename = "omega_rad_s")]
    omega: Vec<f64>,
    psd: Vec<f64>,
    #[serde(rename = "detuning_rad_s")]
    detuning: f64,
    provenance: Provenance,
}

impl RawSpectrum {
    pub fn new(
        omega: Vec<f64>,
        psd: Vec<f64>,
        detuning: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if omega.len() != psd.len() {
            return Err(Error::invalid(
                "psd",
                format!(
                    "length {} differs from grid length {}",
                    psd.len(),
                    omega.len()
                ),
            ));
        }
        check_grid(&omega)?;
        if let Some(p) = psd.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid(
                "psd",
                format!("values must be finite and >= 0, found {p}"),
            ));
        }
        if !detuning.is_finite() {
            return Err(Error::invalid("detuning_rad_s", "must be finite"));
        }
        Ok(Self {
            omega,
            psd,
            detuning,
            provenance,
        })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn psd(&self) -> &[f64] {
        &self.psd
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// r(Δ) = 1 − η_c κ/(κ/2 + iΔ).
pub fn reflection_coefficient(cav: &OpticalCavity, detuning: f64) -> Complex64 {
    let kappa = cav.linewidth();
    1.0 - cav.eta_c() * kappa / Complex64::new(0.5 * kappa, detuning)
}

fn reflection_derivative(cav: &OpticalCavity, detuning: f64) -> Complex64 {
    let kappa = cav.linewidth();
    let d = Complex64::new(0.5 * kappa, detuning);
    Complex64::i() * cav.eta_c() * kappa / (d * d)
}

/// Cavity filter H(ω) = 1/(1 − 2iω/κ) acting on the high-frequency
/// displacement signal.
pub fn cavity_filter(cav: &OpticalCavity, omega: f64) -> Complex64 {
    Complex64::new(1.0, -2.0 * omega / cav.linewidth()).inv()
}

/// Error-signal model with its normalisation cached.
#[derive(Debug, Clone, Copy)]
pub struct PdhReadout {
    cav: OpticalCavity,
    config: PdhConfig,
    norm: f64,
}

impl PdhReadout {
    pub fn new(cav: &OpticalCavity, config: &PdhConfig) -> Self {
        let mut readout = Self {
            cav: *cav,
            config: *config,
            norm: 1.0,
        };
        // ε is odd, so its peak-to-peak is twice the maximum over Δ > 0;
        // scan past the sidebands, then polish the best grid point
        let kappa = cav.linewidth();
        let omega = config.mod_freq;
        let span = omega + 10.0 * kappa;
        let step = kappa.min(omega) / 100.0;
        let n = (span / step).ceil() as usize;
        let abs_at = |d: f64| readout.raw(d).abs();
        let (best, _) = (0..=n)
            .map(|i| i as f64 * step)
            .map(|d| (d, abs_at(d)))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |acc, p| if p.1 > acc.1 { p } else { acc },
            );
        let (mut lo, mut hi) = ((best - step).max(0.0), best + step);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if abs_at(a) > abs_at(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let peak = abs_at(0.5 * (lo + hi));
        let sign = if readout.raw_slope(0.0) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        readout.norm = sign / (2.0 * peak);
        readout
    }

    pub fn config(&self) -> &PdhConfig {
        &self.config
    }

    fn raw(&self, detuning: f64) -> f64 {
        let w = self.config.mod_freq;
        let r = reflection_coefficient(&self.cav, detuning);
        let up = reflection_coefficient(&self.cav, detuning + w);
        let down = reflection_coefficient(&self.cav, detuning - w);
        (r * up.conj() - r.conj() * down).im
    }

    fn raw_slope(&self, detuning: f64) -> f64 {
        let w = self.config.mod_freq;
        let (r, dr) = (
            reflection_coefficient(&self.cav, detuning),
            reflection_derivative(&self.cav, detuning),
        );
        let (up, dup) = (
            reflection_coefficient(&self.cav, detuning + w),
            reflection_derivative(&self.cav, detuning + w),
        );
        let (down, ddown) = (
            reflection_coefficient(&self.cav, detuning - w),
            reflection_derivative(&self.cav, detuning - w),
        );
        (dr * up.conj() + r * dup.conj() - dr.conj() * down - r.conj() * ddown).im
    }

    /// ε(Δ), normalised to unit peak-to-peak with positive slope at Δ = 0.
    pub fn error_signal(&self, detuning: f64) -> f64 {
        self.norm * self.raw(detuning)
    }

    /// ∂ε/∂Δ in 1/(rad/s).
    pub fn error_slope(&self, detuning: f64) -> f64 {
        self.norm * self.raw_slope(detuning)
    }

    /// Detector units per metre: ε'(Δ)·G·|H(ω)|. Only defined inside the
    /// lock range |Δ| < κ.
    pub fn transduction_gain(&self, detuning: f64, omega: f64) -> Result<f64> {
        let kappa = self.cav.linewidth();
        if !(detuning.abs() < kappa) {
            return Err(Error::OutOfLockRange { detuning, kappa });
        }
        Ok(self.error_slope(detuning)
            * self.cav.frequency_pull()
            * cavity_filter(&self.cav, omega).norm())
    }
}

pub fn pdh_error_signal(cav: &OpticalCavity, pdh: &PdhConfig, detuning: f64) -> f64 {
    PdhReadout::new(cav, pdh).error_signal(detuning)
}

pub fn transduction_gain(
    cav: &OpticalCavity,
    pdh: &PdhConfig,
    detuning: f64,
    omega: f64,
) -> Result<f64> {
    PdhReadout::new(cav, pdh).transduction_gain(detuning, omega)
}

/// Width attributed to grid point `k` (half the distance between its
/// neighbours, one-sided at the ends).
fn bin_width(omega: &[f64], k: usize) -> f64 {
    let n = omega.len();
    match k {
        0 => omega[1] - omega[0],
        _ if k == n - 1 => omega[n - 1] - omega[n - 2],
        _ => 0.5 * (omega[k + 1] - omega[k - 1]),
    }
}

fn reference_bin(omega: &[f64], ref_freq: f64) -> Result<usize> {
    let k = omega
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - ref_freq).abs().total_cmp(&(b.1 - ref_freq).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if k < 2 || k + 2 >= omega.len() {
        return Err(Error::invalid(
            "ref_freq_rad_s",
            format!("reference at {ref_freq} rad/s needs two grid points on each side"),
        ));
    }
    Ok(k)
}

/// Cubic through bins k−2, k−1, k+1, k+2 evaluated at bin k.
fn baseline(omega: &[f64], psd: &[f64], k: usize) -> f64 {
    let idx = [k - 2, k - 1, k + 1, k + 2];
    let x = omega[k];
    idx.iter()
        .map(|&i| {
            let w: f64 = idx
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (x - omega[j]) / (omega[i] - omega[j]))
                .product();
            w * psd[i]
        })
        .sum()
}

/// Raw detector spectrum of `true_spectrum` seen at the operating-point
/// detuning: gain²·S_x + a reference tone in the bin nearest ω_ref carrying
/// the area gain²(ω_ref)·x_ref², plus a white `noise_floor`.
pub fn synthesize_raw_spectrum(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
    pdh: &PdhConfig,
    true_spectrum: &SpectrumSeries,
    noise_floor: f64,
) -> Result<RawSpectrum> {
    if !(noise_floor.is_finite() && noise_floor >= 0.0) {
        return Err(Error::invalid(
            "noise_floor",
            format!("must be >= 0, got {noise_floor}"),
        ));
    }
    let eff = effective_dynamics(cav, mode, op, BackactionKind::RadiationPressure);
    let exclusion = REFERENCE_EXCLUSION_LINEWIDTHS * 2.0 * eff.gamma_eff.abs();
    if (pdh.ref_freq - eff.omega_eff).abs() < exclusion {
        return Err(Error::invalid(
            "ref_freq_rad_s",
            format!(
                "reference at {} rad/s is within {REFERENCE_EXCLUSION_LINEWIDTHS} linewidths of the mechanical peak at {} rad/s",
                pdh.ref_freq, eff.omega_eff
            ),
        ));
    }
    let readout = PdhReadout::new(cav, pdh);
    let omega = true_spectrum.omega();
    let k = reference_bin(omega, pdh.ref_freq)?;
    let mut psd = omega
        .iter()
        .zip(true_spectrum.psd())
        .map(|(&w, &s)| Ok(readout.transduction_gain(op.detuning, w)?.powi(2) * s + noise_floor))
        .collect::<Result<Vec<f64>>>()?;
    let x_ref = pdh.reference_displacement(cav);
    psd[k] += readout.transduction_gain(op.detuning, omega[k])?.powi(2) * x_ref * x_ref
        / bin_width(omega, k);
    RawSpectrum::new(omega.to_vec(), psd, op.detuning, Provenance::SyntheticPdh)
}

/// Converts a raw spectrum to m²/(rad/s) using the reference tone: the
/// tone's excess over a cubic baseline fixes the displacement scale at
/// ω_ref, the cavity filter is divided out, and the reference bin is
/// replaced by its baseline.
pub fn calibrate_spectrum(
    raw: &RawSpectrum,
    pdh: &PdhConfig,
    cav: &OpticalCavity,
) -> Result<SpectrumSeries> {
    let omega = raw.omega();
    let k = reference_bin(omega, pdh.ref_freq)?;
    let base = baseline(omega, raw.psd(), k).max(0.0);
    let excess = raw.psd()[k] - base;
    let snr = if base > 0.0 {
        excess / base
    } else if excess > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if !(snr > MIN_REFERENCE_SNR) {
        return Err(Error::WeakReference { snr });
    }
    let x_ref = pdh.reference_displacement(cav);
    let scale = x_ref * x_ref / (excess * bin_width(omega, k));
    let h_ref = cavity_filter(cav, omega[k]).norm_sqr();
    let psd = omega
        .iter()
        .zip(raw.psd())
        .enumerate()
        .map(|(i, (&w, &p))| {
            let p = if i == k { base } else { p };
            p * scale * h_ref / cavity_filter(cav, w).norm_sqr()
        })
        .collect();
    let provenance = match raw.provenance() {
        Provenance::SyntheticPdh => Provenance::SyntheticPdh,
        _ => Provenance::External,
    };
    Ok(SpectrumSeries::new(omega.to_vec(), psd, provenance)?
        .with_meta("detuning_at_acquisition_rad_s", raw.detuning())
        .with_meta("reference_snr", snr))
}

/// m = k_B·T/(ω_eff²·⟨x²⟩) from the fitted line area of a calibrated
/// spectrum taken at Δ = 0, where the mode is at the bath temperature.
pub fn calibrate_effective_mass(calibrated: &SpectrumSeries, t_known: f64) -> Result<f64> {
    if !(t_known.is_finite() && t_known > 0.0) {
        return Err(Error::invalid(
            "T_known",
            format!("must be > 0, got {t_known}"),
        ));
    }
    let fit = fit_spectrum(calibrated)?;
    let area =
        peak_area(&fit).ok_or_else(|| Error::Degenerate("fit lacks line parameters".into()))?;
    let w = fit.get("omega_eff").unwrap_or(f64::NAN);
    Ok(K_B * t_known / (w * w * area))
}
