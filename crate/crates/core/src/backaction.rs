//! Linearised optical backaction on the mechanical mode.
//!
//! The self-energy Σ(ω) is the complex force-per-displacement that the
//! intracavity field adds to the inverse mechanical susceptibility:
//!
//! ```text
//! χ⁻¹(ω) = m(ω_m² − ω² + 2iγ_0ω) + Σ(ω)
//! ```
//!
//! so Re Σ stiffens the spring and Im Σ > 0 adds damping. In this convention
//!
//! ```text
//! Σ(ω) = iħG²n̄ [ 1/(κ/2 − i(Δ−ω)) − 1/(κ/2 + i(Δ+ω)) ]
//! ```
//!
//! which vanishes identically at Δ = 0 and reproduces the closed forms in
//! [`gamma_opt`] and [`optical_spring_shift`] at ω = ω_m.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::constants::HBAR;
use crate::error::{Error, Result};

/// Retarded (bolometric) force parameters. The photothermal force follows
/// the cavity intensity through a single-pole lag of time constant `tau_pt`
/// and is `strength_ratio` times as strong as radiation pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPhotothermal")]
pub struct PhotothermalParams {
    #[serde(rename = "tau_pt_s")]
    tau_pt: f64,
    strength_ratio: f64,
}

#[derive(Deserialize)]
struct RawPhotothermal {
    tau_pt_s: f64,
    strength_ratio: f64,
}

impl TryFrom<RawPhotothermal> for PhotothermalParams {
    type Error = Error;
    fn try_from(raw: RawPhotothermal) -> Result<Self> {
        PhotothermalParams::new(raw.tau_pt_s, raw.strength_ratio)
    }
}

impl PhotothermalParams {
    pub fn new(tau_pt: f64, strength_ratio: f64) -> Result<Self> {
        if !(tau_pt.is_finite() && tau_pt > 0.0) {
            return Err(Error::invalid(
                "tau_pt_s",
                format!("must be > 0, got {tau_pt}"),
            ));
        }
        if !(strength_ratio.is_finite() && strength_ratio >= 0.0) {
            return Err(Error::invalid(
                "strength_ratio",
                format!("must be >= 0, got {strength_ratio}"),
            ));
        }
        Ok(Self {
            tau_pt,
            strength_ratio,
        })
    }

    pub fn tau_pt(&self) -> f64 {
        self.tau_pt
    }

    pub fn strength_ratio(&self) -> f64 {
        self.strength_ratio
    }

    /// Causal single-pole lag 1/(1 + iωτ) in the Σ convention above.
    pub fn lag(&self, omega: f64) -> Complex64 {
        Complex64::new(1.0, omega * self.tau_pt).inv()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackactionKind {
    #[default]
    RadiationPressure,
    Photothermal(PhotothermalParams),
}

/// ħG²n̄, the optomechanical spring scale in N/m·(rad/s).
fn coupling_scale(cav: &OpticalCavity, op: &OperatingPoint) -> f64 {
    let g = cav.frequency_pull();
    HBAR * g * g * cav.intracavity_photons(op)
}

fn rp_sigma(scale: f64, kappa: f64, detuning: f64, omega: f64) -> Complex64 {
    let half = 0.5 * kappa;
    let lower = Complex64::new(half, -(detuning - omega)).inv();
    let upper = Complex64::new(half, detuning + omega).inv();
    Complex64::i() * scale * (lower - upper)
}

/// Radiation-pressure self-energy Σ(ω) in N/m.
pub fn rp_self_energy(
    cav: &OpticalCavity,
    _mode: &MechanicalMode,
    op: &OperatingPoint,
    omega: f64,
) -> Complex64 {
    rp_sigma(coupling_scale(cav, op), cav.linewidth(), op.detuning, omega)
}

/// Photothermal self-energy: the radiation-pressure response scaled by
/// `strength_ratio` and filtered by the exponential retardation.
pub fn pt_self_energy(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
    pt: &PhotothermalParams,
    omega: f64,
) -> Complex64 {
    pt.strength_ratio * rp_self_energy(cav, mode, op, omega) * pt.lag(omega)
}

/// Σ(ω) for either force kind, with Σ(ω_m) cached.
#[derive(Debug, Clone, Copy)]
pub struct SelfEnergy {
    scale: f64,
    kappa: f64,
    detuning: f64,
    kind: BackactionKind,
    at_resonance: Complex64,
}

impl SelfEnergy {
    pub fn new(
        cav: &OpticalCavity,
        mode: &MechanicalMode,
        op: &OperatingPoint,
        kind: BackactionKind,
    ) -> Self {
        let mut s = Self {
            scale: coupling_scale(cav, op),
            kappa: cav.linewidth(),
            detuning: op.detuning,
            kind,
            at_resonance: Complex64::new(0.0, 0.0),
        };
        s.at_resonance = s.eval(mode.omega_m());
        s
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let rp = rp_sigma(self.scale, self.kappa, self.detuning, omega);
        match self.kind {
            BackactionKind::RadiationPressure => rp,
            BackactionKind::Photothermal(pt) => pt.strength_ratio * rp * pt.lag(omega),
        }
    }

    /// Σ(ω_m).
    pub fn at_resonance(&self) -> Complex64 {
        self.at_resonance
    }

    pub fn kind(&self) -> BackactionKind {
        self.kind
    }
}

fn lorentzians(kappa: f64, detuning: f64, omega_m: f64) -> (f64, f64, f64, f64) {
    let h2 = 0.25 * kappa * kappa;
    let dm = detuning - omega_m;
    let dp = detuning + omega_m;
    (dm, dp, h2 + dm * dm, h2 + dp * dp)
}

/// Optically added energy damping Γ_opt (full width, rad/s).
pub fn gamma_opt(cav: &OpticalCavity, mode: &MechanicalMode, op: &OperatingPoint) -> f64 {
    let kappa = cav.linewidth();
    let (_, _, lo, hi) = lorentzians(kappa, op.detuning, mode.omega_m());
    let pre = coupling_scale(cav, op) / (2.0 * mode.mass() * mode.omega_m());
    pre * (kappa / lo - kappa / hi)
}

/// Optical spring shift δω_m, so that ω_eff = ω_m + δω_m.
pub fn optical_spring_shift(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
) -> f64 {
    let (dm, dp, lo, hi) = lorentzians(cav.linewidth(), op.detuning, mode.omega_m());
    let pre = coupling_scale(cav, op) / (2.0 * mode.mass() * mode.omega_m());
    -pre * (dp / hi + dm / lo)
}

/// Backaction-modified mode parameters. `gamma_eff` is an amplitude
/// half-width; `stable` is false once optical anti-damping overcomes γ_0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDynamics {
    #[serde(rename = "omega_eff_rad_s")]
    pub omega_eff: f64,
    #[serde(rename = "gamma_eff_rad_s")]
    pub gamma_eff: f64,
    pub stable: bool,
}

impl EffectiveDynamics {
    pub fn new(omega_eff: f64, gamma_eff: f64) -> Self {
        Self {
            omega_eff,
            gamma_eff,
            stable: gamma_eff > 0.0 && omega_eff > 0.0,
        }
    }

    pub fn require_stable(self) -> Result<Self> {
        if self.stable {
            Ok(self)
        } else {
            Err(Error::DynamicalInstability {
                gamma_eff: self.gamma_eff,
            })
        }
    }
}

pub fn effective_dynamics(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
    kind: BackactionKind,
) -> EffectiveDynamics {
    match kind {
        BackactionKind::RadiationPressure => EffectiveDynamics::new(
            mode.omega_m() + optical_spring_shift(cav, mode, op),
            mode.gamma_0() + 0.5 * gamma_opt(cav, mode, op),
        ),
        BackactionKind::Photothermal(_) => {
            let sigma = SelfEnergy::new(cav, mode, op, kind).at_resonance();
            let norm = 2.0 * mode.mass() * mode.omega_m();
            EffectiveDynamics::new(
                mode.omega_m() + sigma.re / norm,
                mode.gamma_0() + sigma.im / norm,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::cavity::{CavityGeometry, DEFAULT_ETA_C};

    fn cryo() -> (OpticalCavity, MechanicalMode, OperatingPoint) {
        let geom = CavityGeometry::new(0.025, 0.0251, 1064e-9).unwrap();
        let cav = OpticalCavity::new(geom, 2200.0, DEFAULT_ETA_C).unwrap();
        let mode = MechanicalMode::new(3.5e6, 2.0 * PI * 269.0, 40e-12).unwrap();
        let op = OperatingPoint::new(3.5e6, 14e-3, 35.0).unwrap();
        (cav, mode, op)
    }

    #[test]
    fn zero_detuning_is_inert() {
        let (cav, mode, op) = cryo();
        let op = op.with_detuning(0.0);
        for k in 0..100 {
            let w = 1e5 * k as f64;
            assert_eq!(
                rp_self_energy(&cav, &mode, &op, w),
                Complex64::new(0.0, 0.0)
            );
        }
        assert_eq!(gamma_opt(&cav, &mode, &op), 0.0);
        assert_eq!(optical_spring_shift(&cav, &mode, &op), 0.0);
        let eff = effective_dynamics(&cav, &mode, &op, BackactionKind::RadiationPressure);
        assert_eq!(
            (eff.omega_eff, eff.gamma_eff),
            (mode.omega_m(), mode.gamma_0())
        );
    }

    #[test]
    fn self_energy_matches_closed_forms() {
        let (cav, mode, op) = cryo();
        for k in -40..=40 {
            let op = op.with_detuning(1e5 * k as f64 + 1.3e3);
            let s = rp_self_energy(&cav, &mode, &op, mode.omega_m());
            let norm = mode.mass() * mode.omega_m();
            let g = gamma_opt(&cav, &mode, &op);
            let d = optical_spring_shift(&cav, &mode, &op);
            let scale = gamma_opt(&cav, &mode, &op.with_detuning(mode.omega_m()));
            assert!((s.im / norm - g).abs() <= 1e-10 * scale);
            assert!((s.re / (2.0 * norm) - d).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn resolved_sideband_limit() {
        // κ ≪ ω_m: Im Σ(ω_m) → 2ħG²n̄/κ at Δ = ω_m
        let geom = CavityGeometry::new(0.025, 0.0251, 1064e-9).unwrap();
        let cav = OpticalCavity::new(geom, 1e6, 0.5).unwrap();
        let mode = MechanicalMode::new(3.5e6, 100.0, 40e-12).unwrap();
        let op = OperatingPoint::new(3.5e6, 1e-6, 1.0).unwrap();
        let s = rp_self_energy(&cav, &mode, &op, mode.omega_m());
        let g = cav.frequency_pull();
        let limit = 2.0 * HBAR * g * g * cav.intracavity_photons(&op) / cav.linewidth();
        assert!(s.im > 0.0);
        assert!(((s.im - limit) / limit).abs() < 1e-4);
    }

    #[test]
    fn cooling_side_magnitude() {
        let (cav, mode, op) = cryo();
        let g = gamma_opt(&cav, &mode, &op);
        assert!(g > 4e5 && g < 9e5, "{g}");
        // pinned regression: 35 K set at Δ = ω_m, 14 mW
        assert!((g - 6.4990e5).abs() / g < 1e-4, "{g}");
    }

    #[test]
    fn spring_shift_regression_room_temperature_fit_values() {
        let geom = CavityGeometry::new(0.025, 0.0251, 1064e-9).unwrap();
        let cav = OpticalCavity::new(geom, 2300.0, DEFAULT_ETA_C).unwrap();
        let mode = MechanicalMode::new(3.5e6, 2.0 * PI * 269.0, 125e-12).unwrap();
        let op = OperatingPoint::new(3.5e6, 1e-3, 295.0).unwrap();
        let d = optical_spring_shift(&cav, &mode, &op);
        assert!((d - (-9.8767e3)).abs() < 1.0, "{d}");
    }

    #[test]
    fn symmetry_and_linearity() {
        let (cav, mode, op) = cryo();
        let scale = gamma_opt(&cav, &mode, &op).abs();
        for k in 1..60 {
            let d = 2.5e5 * k as f64;
            let p = op.with_detuning(d);
            let m = op.with_detuning(-d);
            assert!(
                (gamma_opt(&cav, &mode, &p) + gamma_opt(&cav, &mode, &m)).abs() < 1e-12 * scale
            );
            assert!(
                (optical_spring_shift(&cav, &mode, &p) + optical_spring_shift(&cav, &mode, &m))
                    .abs()
                    < 1e-12 * scale
            );
            let g1 = gamma_opt(&cav, &mode, &p);
            let g2 = gamma_opt(&cav, &mode, &p.with_power(2.0 * p.power));
            assert!((g2 - 2.0 * g1).abs() <= 1e-12 * g1.abs());
        }
    }

    #[test]
    fn argmax_of_damping() {
        // Brute-force grid argmax; with κ/ω_m ≈ 4.9 the optimum sits above ω_m.
        let (cav, mode, op) = cryo();
        let best = (1..=5000)
            .map(|k| k as f64 * 1e-3 * mode.omega_m())
            .max_by(|a, b| {
                gamma_opt(&cav, &mode, &op.with_detuning(*a)).total_cmp(&gamma_opt(
                    &cav,
                    &mode,
                    &op.with_detuning(*b),
                ))
            })
            .unwrap();
        assert!(
            (best / mode.omega_m() - 1.231).abs() < 2e-3,
            "{}",
            best / mode.omega_m()
        );
    }

    #[test]
    fn photothermal_limits() {
        let (cav, mode, op) = cryo();
        let zero = PhotothermalParams::new(1e-3, 0.0).unwrap();
        assert_eq!(
            pt_self_energy(&cav, &mode, &op, &zero, 3e6),
            Complex64::new(0.0, 0.0)
        );
        let fast = PhotothermalParams::new(1e-15, 1.0).unwrap();
        for k in 1..50 {
            let w = 2e5 * k as f64;
            let a = pt_self_energy(&cav, &mode, &op, &fast, w);
            let b = rp_self_energy(&cav, &mode, &op, w);
            assert!((a - b).norm() <= 1e-6 * b.norm());
        }
        let rp = effective_dynamics(&cav, &mode, &op, BackactionKind::RadiationPressure);
        let pt = effective_dynamics(&cav, &mode, &op, BackactionKind::Photothermal(fast));
        assert!(((rp.gamma_eff - pt.gamma_eff) / rp.gamma_eff).abs() < 1e-6);
        assert!(((rp.omega_eff - pt.omega_eff) / rp.omega_eff).abs() < 1e-6);
    }

    #[test]
    fn slow_photothermal_differs() {
        let (cav, mode, op) = cryo();
        let op = op.with_power(1e-3);
        let slow = PhotothermalParams::new(10.0 / mode.omega_m(), 1.0).unwrap();
        let rp = effective_dynamics(&cav, &mode, &op, BackactionKind::RadiationPressure);
        let pt = effective_dynamics(&cav, &mode, &op, BackactionKind::Photothermal(slow));
        assert!(((rp.gamma_eff - pt.gamma_eff) / rp.gamma_eff).abs() > 0.2);
    }

    #[test]
    fn required_cryo_damping_ratio() {
        // T_eff = T_0 γ_0/γ_eff with 35 K → 0.29 K
        let g0 = 2.0 * PI * 269.0;
        let g_eff = g0 * 35.0 / 0.29;
        assert!((g_eff / (2.0 * PI) - 32.47e3).abs() < 10.0);
    }

    #[test]
    fn blue_side_instability_flag() {
        let (cav, mode, op) = cryo();
        let eff = effective_dynamics(
            &cav,
            &mode,
            &op.with_detuning(-mode.omega_m()),
            BackactionKind::RadiationPressure,
        );
        assert!(!eff.stable);
        assert!(eff.require_stable().is_err());
    }
}
