//! Single-sided displacement power spectral densities.
//!
//! All PSDs are one-sided on ω ≥ 0 in m²/(rad/s), so that ∫₀^∞ S_x dω = ⟨x²⟩.
//! With that reading the thermal spectrum
//!
//! ```text
//! S_x(ω) = (4 k_B T γ_0 / πm) / ((ω_eff² − ω²)² + 4γ_eff²ω²)
//! ```
//!
//! integrates to k_B T γ_0 / (m γ_eff ω_eff²), which is equipartition at
//! γ_eff = γ_0.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backaction::{effective_dynamics, BackactionKind, SelfEnergy};
use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::constants::K_B;
use crate::error::{Error, Result};

pub const MIN_GRID_LEN: usize = 16;

/// Half-span of analytic grids, in units of the linewidth 2γ_eff.
pub const ANALYTIC_SPAN_LINEWIDTHS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticEq1,
    AnalyticFull,
    Langevin,
    SyntheticPdh,
    External,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::AnalyticEq1 => "analytic-eq1",
            Provenance::AnalyticFull => "analytic-full",
            Provenance::Langevin => "langevin",
            Provenance::SyntheticPdh => "synthetic-pdh",
            Provenance::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    omega: Vec<f64>,
    psd: Vec<f64>,
    provenance: Provenance,
    meta: BTreeMap<String, f64>,
}

impl SpectrumSeries {
    pub fn new(omega: Vec<f64>, psd: Vec<f64>, provenance: Provenance) -> Result<Self> {
        check_grid(&omega)?;
        if psd.len() != omega.len() {
            return Err(Error::invalid(
                "psd",
                format!(
                    "length {} does not match grid length {}",
                    psd.len(),
                    omega.len()
                ),
            ));
        }
        if let Some(bad) = psd.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid(
                "psd",
                format!("values must be finite and >= 0, found {bad}"),
            ));
        }
        Ok(Self {
            omega,
            psd,
            provenance,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.to_owned(), value);
        self
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn psd(&self) -> &[f64] {
        &self.psd
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn meta(&self) -> &BTreeMap<String, f64> {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Sub-series restricted to `lo <= ω <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> Result<SpectrumSeries> {
        let (omega, psd): (Vec<f64>, Vec<f64>) = self
            .omega
            .iter()
            .zip(&self.psd)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, p)| (*w, *p))
            .unzip();
        let mut out = SpectrumSeries::new(omega, psd, self.provenance)?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Uniformly rescaled copy.
    pub fn scaled(&self, factor: f64) -> Result<SpectrumSeries> {
        let mut out = SpectrumSeries::new(
            self.omega.clone(),
            self.psd.iter().map(|p| p * factor).collect(),
            self.provenance,
        )?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

pub(crate) fn check_grid(omega: &[f64]) -> Result<()> {
    if omega.len() < MIN_GRID_LEN {
        return Err(Error::invalid(
            "omega_grid",
            format!("needs at least {MIN_GRID_LEN} points, got {}", omega.len()),
        ));
    }
    if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(
            "omega_grid",
            "values must be finite and >= 0",
        ));
    }
    if omega.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("omega_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Uniform grid covering ω_eff ± 20 linewidths (clipped at ω = 0).
pub fn analytic_grid(omega_eff: f64, gamma_eff: f64, points: usize) -> Vec<f64> {
    let half = ANALYTIC_SPAN_LINEWIDTHS * 2.0 * gamma_eff;
    let lo = (omega_eff - half).max(0.0);
    let hi = omega_eff + half;
    let n = points.max(MIN_GRID_LEN);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Thermal numerator 4 k_B T γ_0 / (πm) of the displacement spectrum.
pub fn thermal_prefactor(mode: &MechanicalMode, temperature: f64) -> f64 {
    4.0 * K_B * temperature * mode.gamma_0() / (PI * mode.mass())
}

fn eq1_shape(amplitude: f64, omega_eff: f64, gamma_eff: f64, omega: f64) -> f64 {
    let d = omega_eff * omega_eff - omega * omega;
    amplitude / (d * d + 4.0 * gamma_eff * gamma_eff * omega * omega)
}

/// Exact ∫₀^∞ of [`spectrum_eq1`]: k_B T γ_0 / (m γ_eff ω_eff²).
pub fn eq1_area(mode: &MechanicalMode, omega_eff: f64, gamma_eff: f64, temperature: f64) -> f64 {
    thermal_prefactor(mode, temperature) * PI / (4.0 * gamma_eff * omega_eff * omega_eff)
}

pub fn spectrum_eq1(
    mode: &MechanicalMode,
    omega_eff: f64,
    gamma_eff: f64,
    temperature: f64,
    grid: &[f64],
) -> Result<SpectrumSeries> {
    if !(gamma_eff > 0.0) {
        return Err(Error::DynamicalInstability { gamma_eff });
    }
    let a = thermal_prefactor(mode, temperature);
    let psd = grid
        .iter()
        .map(|w| eq1_shape(a, omega_eff, gamma_eff, *w))
        .collect();
    Ok(
        SpectrumSeries::new(grid.to_vec(), psd, Provenance::AnalyticEq1)?
            .with_meta("omega_eff_rad_s", omega_eff)
            .with_meta("gamma_eff_rad_s", gamma_eff)
            .with_meta("temperature_K", temperature)
            .with_meta("mass_kg", mode.mass())
            .with_meta("gamma_0_rad_s", mode.gamma_0()),
    )
}

/// Displacement spectrum with the full frequency-dependent self-energy in
/// place of the effective (ω_eff, γ_eff) pair.
pub fn spectrum_full(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
    kind: BackactionKind,
    grid: &[f64],
) -> Result<SpectrumSeries> {
    effective_dynamics(cav, mode, op, kind).require_stable()?;
    let sigma = SelfEnergy::new(cav, mode, op, kind);
    let a = thermal_prefactor(mode, op.bath_temperature);
    let m = mode.mass();
    let wm2 = mode.omega_m() * mode.omega_m();
    let psd = grid
        .iter()
        .map(|&w| {
            let s = sigma.eval(w);
            let re = wm2 - w * w + s.re / m;
            // 2ω(γ_0 + Im Σ/(2mω)), written to stay finite at ω = 0
            let im = 2.0 * w * mode.gamma_0() + s.im / m;
            a / (re * re + im * im)
        })
        .collect();
    Ok(
        SpectrumSeries::new(grid.to_vec(), psd, Provenance::AnalyticFull)?
            .with_meta("detuning_rad_s", op.detuning)
            .with_meta("power_W", op.power)
            .with_meta("temperature_K", op.bath_temperature)
            .with_meta("mass_kg", m),
    )
}

/// Rough peak parameters from the bin maximum and half-power crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub index: usize,
    pub omega: f64,
    pub height: f64,
    pub gamma: f64,
    /// max/median of the series
    pub contrast: f64,
}

impl PeakEstimate {
    /// Amplitude A of the thermal line that has this height and width.
    pub fn amplitude(&self) -> f64 {
        self.height * 4.0 * self.gamma * self.gamma * self.omega * self.omega
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn estimate_peak(omega: &[f64], psd: &[f64]) -> Option<PeakEstimate> {
    let (index, &height) = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let med = median(psd);
    let contrast = if med > 0.0 {
        height / med
    } else {
        f64::INFINITY
    };
    let half = 0.5 * height;
    let cross = |i: usize, j: usize| {
        let (w0, w1, p0, p1) = (omega[i], omega[j], psd[i], psd[j]);
        w0 + (half - p0) * (w1 - w0) / (p1 - p0)
    };
    let left = (1..=index)
        .rev()
        .find(|&i| psd[i - 1] < half)
        .map(|i| cross(i - 1, i));
    let right = (index..psd.len() - 1)
        .find(|&i| psd[i + 1] < half)
        .map(|i| cross(i, i + 1));
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (omega[index] - l),
        (None, Some(r)) => 2.0 * (r - omega[index]),
        (None, None) => return None,
    };
    // one-bin floor keeps γ positive on unresolved lines
    let bin = if index + 1 < omega.len() {
        omega[index + 1] - omega[index]
    } else {
        omega[index] - omega[index - 1]
    };
    Some(PeakEstimate {
        index,
        omega: omega[index],
        height,
        gamma: (0.5 * width).max(0.5 * bin),
        contrast,
    })
}

/// Area of a PSD split into the on-grid trapezoid and the analytic tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaEstimate {
    pub total: f64,
    pub trapezoid: f64,
    pub tail: f64,
}

impl AreaEstimate {
    pub fn tail_fraction(&self) -> f64 {
        if self.total > 0.0 {
            self.tail / self.total
        } else {
            0.0
        }
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// ∫ of the thermal line shape over [0, a] and [b, ∞), each scaled so the
/// model matches the series at the corresponding grid edge.
fn tail_integrals(peak: &PeakEstimate, first: (f64, f64), last: (f64, f64)) -> f64 {
    let (w0, g) = (peak.omega, peak.gamma);
    let shape = |w: f64| eq1_shape(1.0, w0, g, w);
    let mut tail = 0.0;

    let (a, sa) = first;
    if a > 0.0 && sa > 0.0 && a < w0 {
        // ω = w0 − e^u, u ∈ [ln(w0 − a), ln w0]
        let lower = simpson(
            |u| {
                let t = u.exp();
                shape(w0 - t) * t
            },
            (w0 - a).ln(),
            w0.ln(),
            2048,
        );
        tail += lower * sa / shape(a);
    }

    let (b, sb) = last;
    if sb > 0.0 && b > w0 {
        // ω = w0 + e^u up to ω = 1e4·b, then the ω⁻⁴ remainder
        let cut = 1e4 * b;
        let upper = simpson(
            |u| {
                let t = u.exp();
                shape(w0 + t) * t
            },
            (b - w0).ln(),
            (cut - w0).ln(),
            4096,
        ) + 1.0 / (3.0 * cut.powi(3));
        tail += upper * sb / shape(b);
    }
    tail
}

/// ⟨x²⟩ = ∫₀^∞ S_x dω by trapezoid on the grid plus a tail correction
/// beyond the grid ends. Tails are only added when the series has a
/// resolvable peak; a flat or peakless series is integrated as given.
pub fn mean_square_displacement(s: &SpectrumSeries) -> AreaEstimate {
    let trap = trapezoid(&s.omega, &s.psd);
    let n = s.len();
    let tail = match estimate_peak(&s.omega, &s.psd) {
        Some(peak) if peak.contrast > 5.0 && peak.index > 0 && peak.index + 1 < n => {
            tail_integrals(
                &peak,
                (s.omega[0], s.psd[0]),
                (s.omega[n - 1], s.psd[n - 1]),
            )
        }
        _ => 0.0,
    };
    let est = AreaEstimate {
        total: trap + tail,
        trapezoid: trap,
        tail,
    };
    if est.tail_fraction() > 0.01 {
        log::warn!(
            "tail correction is {:.2}% of the spectral area",
            100.0 * est.tail_fraction()
        );
    }
    est
}
