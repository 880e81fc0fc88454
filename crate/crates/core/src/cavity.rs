//! Value types for the cavity, the mechanical mode and the operating point,
//! and the standard cavity relations derived from them.
//!
//! All frequencies are angular (rad/s). Detuning follows Δ = ω_c − ω_l, so
//! Δ > 0 (laser red of the cavity) is the cooling side.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{C, HBAR};
use crate::error::{Error, Result};

/// Input-coupling fraction κ_in/κ used when none is configured: input-coupler
/// transmission 1 − 0.9993 over the round-trip loss 2π/F at F = 2200.
pub const DEFAULT_ETA_C: f64 = 0.245;

/// Estimate of κ_in/κ from the input-coupler reflectivity and the finesse,
/// assuming all remaining loss sits elsewhere in the cavity.
pub fn input_coupling_estimate(input_reflectivity: f64, finesse: f64) -> f64 {
    ((1.0 - input_reflectivity) * finesse / (2.0 * PI)).min(1.0)
}

fn finite_positive(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(
            field,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

/// Waist radius on the flat mirror of a plano-concave cavity of length `length`
/// and input-coupler radius of curvature `roc`.
pub fn cavity_waist(length: f64, roc: f64, wavelength: f64) -> Result<f64> {
    if !(length > 0.0 && length < roc) {
        return Err(Error::UnstableCavity { length, roc });
    }
    Ok(((wavelength / PI) * (length * (roc - length)).sqrt()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry")]
pub struct CavityGeometry {
    #[serde(rename = "length_m")]
    length: f64,
    #[serde(rename = "roc_m")]
    roc: f64,
    #[serde(rename = "wavelength_m")]
    wavelength: f64,
}

#[derive(Deserialize)]
struct RawGeometry {
    length_m: f64,
    roc_m: f64,
    wavelength_m: f64,
}

impl TryFrom<RawGeometry> for CavityGeometry {
    type Error = Error;
    fn try_from(raw: RawGeometry) -> Result<Self> {
        CavityGeometry::new(raw.length_m, raw.roc_m, raw.wavelength_m)
    }
}

impl CavityGeometry {
    /// Requires 0 < L < R; the semi-concentric point L = R is excluded.
    pub fn new(length: f64, roc: f64, wavelength: f64) -> Result<Self> {
        finite_positive("length_m", length)?;
        finite_positive("roc_m", roc)?;
        finite_positive("wavelength_m", wavelength)?;
        if length >= roc {
            return Err(Error::UnstableCavity { length, roc });
        }
        Ok(Self {
            length,
            roc,
            wavelength,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn roc(&self) -> f64 {
        self.roc
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn waist(&self) -> f64 {
        // L < R is a construction invariant
        ((self.wavelength / PI) * (self.length * (self.roc - self.length)).sqrt()).sqrt()
    }

    /// Optical (laser) angular frequency 2πc/λ.
    pub fn optical_angular_frequency(&self) -> f64 {
        2.0 * PI * C / self.wavelength
    }

    /// Optical frequency c/λ in Hz.
    pub fn optical_frequency(&self) -> f64 {
        C / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCavity")]
pub struct OpticalCavity {
    #[serde(flatten)]
    geometry: CavityGeometry,
    finesse: f64,
    eta_c: f64,
    mode_matching: f64,
}

#[derive(Deserialize)]
struct RawCavity {
    length_m: f64,
    roc_m: f64,
    wavelength_m: f64,
    finesse: f64,
    #[serde(default = "default_eta_c")]
    eta_c: f64,
    #[serde(default = "one")]
    mode_matching: f64,
}

fn default_eta_c() -> f64 {
    DEFAULT_ETA_C
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawCavity> for OpticalCavity {
    type Error = Error;
    fn try_from(raw: RawCavity) -> Result<Self> {
        let geometry = CavityGeometry::new(raw.length_m, raw.roc_m, raw.wavelength_m)?;
        OpticalCavity::new(geometry, raw.finesse, raw.eta_c)?.with_mode_matching(raw.mode_matching)
    }
}

impl OpticalCavity {
    pub fn new(geometry: CavityGeometry, finesse: f64, eta_c: f64) -> Result<Self> {
        if !(finesse.is_finite() && finesse >= 1.0) {
            return Err(Error::invalid(
                "finesse",
                format!("must be >= 1, got {finesse}"),
            ));
        }
        if !(eta_c > 0.0 && eta_c <= 1.0) {
            return Err(Error::invalid(
                "eta_c",
                format!("must lie in (0, 1], got {eta_c}"),
            ));
        }
        Ok(Self {
            geometry,
            finesse,
            eta_c,
            mode_matching: 1.0,
        })
    }

    /// Fraction of the quoted input power that couples into the cavity mode.
    pub fn with_mode_matching(mut self, mode_matching: f64) -> Result<Self> {
        if !(mode_matching > 0.0 && mode_matching <= 1.0) {
            return Err(Error::invalid(
                "mode_matching",
                format!("must lie in (0, 1], got {mode_matching}"),
            ));
        }
        self.mode_matching = mode_matching;
        Ok(self)
    }

    pub fn with_finesse(self, finesse: f64) -> Result<Self> {
        OpticalCavity::new(self.geometry, finesse, self.eta_c)?
            .with_mode_matching(self.mode_matching)
    }

    pub fn geometry(&self) -> &CavityGeometry {
        &self.geometry
    }

    pub fn finesse(&self) -> f64 {
        self.finesse
    }

    pub fn eta_c(&self) -> f64 {
        self.eta_c
    }

    pub fn mode_matching(&self) -> f64 {
        self.mode_matching
    }

    /// Angular free spectral range πc/L.
    pub fn free_spectral_range(&self) -> f64 {
        PI * C / self.geometry.length
    }

    /// Intensity decay rate κ (FWHM of the resonance, angular units).
    pub fn linewidth(&self) -> f64 {
        self.free_spectral_range() / self.finesse
    }

    /// Frequency pull G = ω_c/L, in rad/s per metre.
    pub fn frequency_pull(&self) -> f64 {
        self.geometry.optical_angular_frequency() / self.geometry.length
    }

    /// Amplitude of the classical pump term √(η_c κ P/ħω_l) entering the
    /// field equation, in √(photons/s).
    pub fn drive_amplitude(&self, power: f64) -> f64 {
        let w_l = self.geometry.optical_angular_frequency();
        (self.eta_c * self.linewidth() * self.mode_matching * power / (HBAR * w_l)).sqrt()
    }

    /// Mean intracavity photon number at detuning Δ and input power P.
    pub fn intracavity_photons(&self, op: &OperatingPoint) -> f64 {
        let kappa = self.linewidth();
        let w_l = self.geometry.optical_angular_frequency();
        let flux = self.mode_matching * op.power / (HBAR * w_l);
        self.eta_c * kappa * flux / (op.detuning.powi(2) + 0.25 * kappa * kappa)
    }
}

/// One vibrational eigenmode. `gamma_0` is the amplitude half-width, so
/// Q = ω_m/(2γ_0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMode")]
pub struct MechanicalMode {
    #[serde(rename = "omega_m_rad_s")]
    omega_m: f64,
    #[serde(rename = "gamma_0_rad_s")]
    gamma_0: f64,
    #[serde(rename = "mass_kg")]
    mass: f64,
}

#[derive(Deserialize)]
struct RawMode {
    omega_m_rad_s: f64,
    gamma_0_rad_s: f64,
    mass_kg: f64,
}

impl TryFrom<RawMode> for MechanicalMode {
    type Error = Error;
    fn try_from(raw: RawMode) -> Result<Self> {
        MechanicalMode::new(raw.omega_m_rad_s, raw.gamma_0_rad_s, raw.mass_kg)
    }
}

impl MechanicalMode {
    pub fn new(omega_m: f64, gamma_0: f64, mass: f64) -> Result<Self> {
        finite_positive("omega_m_rad_s", omega_m)?;
        finite_positive("gamma_0_rad_s", gamma_0)?;
        finite_positive("mass_kg", mass)?;
        let q = omega_m / (2.0 * gamma_0);
        if q <= 1.0 {
            return Err(Error::invalid(
                "gamma_0_rad_s",
                format!("quality factor ω_m/(2γ_0) = {q} must exceed 1"),
            ));
        }
        Ok(Self {
            omega_m,
            gamma_0,
            mass,
        })
    }

    pub fn with_mass(self, mass: f64) -> Result<Self> {
        MechanicalMode::new(self.omega_m, self.gamma_0, mass)
    }

    pub fn omega_m(&self) -> f64 {
        self.omega_m
    }

    pub fn gamma_0(&self) -> f64 {
        self.gamma_0
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / (2.0 * self.gamma_0)
    }
}

/// A single experimental condition. A bath temperature of zero is accepted
/// and means a noiseless environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    #[serde(rename = "detuning_rad_s")]
    pub detuning: f64,
    #[serde(rename = "power_W")]
    pub power: f64,
    #[serde(rename = "bath_temperature_K")]
    pub bath_temperature: f64,
}

impl OperatingPoint {
    pub fn new(detuning: f64, power: f64, bath_temperature: f64) -> Result<Self> {
        if !detuning.is_finite() {
            return Err(Error::invalid("detuning_rad_s", "must be finite"));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::invalid(
                "power_W",
                format!("must be >= 0, got {power}"),
            ));
        }
        if !(bath_temperature.is_finite() && bath_temperature >= 0.0) {
            return Err(Error::invalid(
                "bath_temperature_K",
                format!("must be >= 0, got {bath_temperature}"),
            ));
        }
        Ok(Self {
            detuning,
            power,
            bath_temperature,
        })
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        Self { detuning, ..self }
    }

    pub fn with_power(self, power: f64) -> Self {
        Self { power, ..self }
    }
}
