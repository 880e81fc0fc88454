//! Mode thermometry, occupancy and the detuning/power cooling sweep.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backaction::{effective_dynamics, BackactionKind, EffectiveDynamics};
use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};
use crate::spectrum::eq1_area;

/// Resolved-sideband threshold 1/√32 on ω_m/κ.
pub const SIDEBAND_THRESHOLD: f64 = 0.176_776_695_296_636_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoResult {
    #[serde(rename = "x2_mean_m2")]
    pub x2_mean: f64,
    #[serde(rename = "T_eff_K")]
    pub t_eff: f64,
    pub n_mean: f64,
}

/// Area thermometry T_eff = m ω_eff² ⟨x²⟩ / k_B.
pub fn effective_temperature(mode: &MechanicalMode, omega_eff: f64, x2_mean: f64) -> f64 {
    mode.mass() * omega_eff * omega_eff * x2_mean / K_B
}

/// Bose occupancy 1/(exp(ħω/k_BT) − 1). For k_BT ≫ ħω this approaches
/// k_BT/ħω − 1/2.
pub fn occupancy(omega_eff: f64, t_eff: f64) -> f64 {
    if t_eff <= 0.0 {
        return 0.0;
    }
    1.0 / (HBAR * omega_eff / (K_B * t_eff)).exp_m1()
}

/// Classical cooling law T_0 γ_0/γ_eff.
pub fn cooling_law_temperature(t0: f64, gamma_0: f64, gamma_eff: f64) -> f64 {
    t0 * gamma_0 / gamma_eff
}

/// Thermometry of the effective-parameter line shape, using its exact area.
pub fn thermo_from_dynamics(
    mode: &MechanicalMode,
    dynamics: &EffectiveDynamics,
    t0: f64,
) -> ThermoResult {
    let x2 = eq1_area(mode, dynamics.omega_eff, dynamics.gamma_eff, t0);
    let t_eff = effective_temperature(mode, dynamics.omega_eff, x2);
    ThermoResult {
        x2_mean: x2,
        t_eff,
        n_mean: occupancy(dynamics.omega_eff, t_eff),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "power_W")]
    pub power: f64,
    #[serde(rename = "detuning_rad_s")]
    pub detuning: f64,
    pub dynamics: EffectiveDynamics,
    /// `None` for unstable rows.
    pub thermo: Option<ThermoResult>,
}

impl SweepRow {
    pub fn t_eff(&self) -> Option<f64> {
        self.thermo.map(|t| t.t_eff)
    }
}

/// Effective dynamics and temperature on the power × detuning grid.
/// Rows are power-major in input order; unstable points are kept and flagged.
pub fn cooling_sweep(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    powers: &[f64],
    detunings: &[f64],
    t0: f64,
    kind: BackactionKind,
) -> Result<Vec<SweepRow>> {
    if powers.is_empty() {
        return Err(Error::invalid("powers_W", "power grid is empty"));
    }
    if detunings.is_empty() {
        return Err(Error::invalid("detunings_rad_s", "detuning grid is empty"));
    }
    let points: Vec<OperatingPoint> = powers
        .iter()
        .flat_map(|&p| {
            detunings
                .iter()
                .map(move |&d| OperatingPoint::new(d, p, t0))
        })
        .collect::<Result<_>>()?;
    Ok(points
        .par_iter()
        .map(|op| {
            let dynamics = effective_dynamics(cav, mode, op, kind);
            SweepRow {
                power: op.power,
                detuning: op.detuning,
                dynamics,
                thermo: dynamics
                    .stable
                    .then(|| thermo_from_dynamics(mode, &dynamics, t0)),
            }
        })
        .collect())
}

/// Rescales each stable row's temperature by (T_0 + βP)/T_0, mimicking
/// absorption heating of the bath.
pub fn inject_absorption_heating(rows: &[SweepRow], beta_k_per_w: f64, t0: f64) -> Vec<SweepRow> {
    rows.iter()
        .map(|row| {
            let mut row = *row;
            if let Some(th) = row.thermo.as_mut() {
                let factor = (t0 + beta_k_per_w * row.power) / t0;
                th.t_eff *= factor;
                th.x2_mean *= factor;
                th.n_mean = occupancy(row.dynamics.omega_eff, th.t_eff);
            }
            row
        })
        .collect()
}

/// Single-line fit of log T_eff against log γ_eff over all stable rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseDiagnostic {
    pub slope: f64,
    pub intercept: f64,
    /// max |T/T_line − 1| over rows
    pub max_residual: f64,
    pub powers: usize,
    /// (power, mean relative residual) per distinct power
    pub per_power_mean_residual: Vec<(f64, f64)>,
}

impl CollapseDiagnostic {
    /// True when the rows collapse onto one line within `tolerance`.
    pub fn collapses(&self, tolerance: f64) -> bool {
        self.max_residual < tolerance
    }
}

pub fn collapse_diagnostic(rows: &[SweepRow]) -> Result<CollapseDiagnostic> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            r.thermo
                .filter(|t| t.t_eff > 0.0)
                .map(|t| (r.power, r.dynamics.gamma_eff.ln(), t.t_eff.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} usable rows, need >= 2",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    if sxx <= 1e-24 * n {
        return Err(Error::Degenerate("all effective dampings are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mut by_power: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    let mut max_residual: f64 = 0.0;
    for &(p, x, y) in &pts {
        let r = (y - (intercept + slope * x)).exp() - 1.0;
        max_residual = max_residual.max(r.abs());
        let e = by_power.entry(p.to_bits()).or_insert((p, 0.0, 0));
        e.1 += r;
        e.2 += 1;
    }
    let mut per_power: Vec<(f64, f64)> = by_power
        .into_values()
        .map(|(p, sum, k)| (p, sum / k as f64))
        .collect();
    per_power.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CollapseDiagnostic {
        slope,
        intercept,
        max_residual,
        powers: per_power.len(),
        per_power_mean_residual: per_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub ratio: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// ω_m/κ against the strict bound 1/√32.
pub fn sideband_threshold_check(cav: &OpticalCavity, mode: &MechanicalMode) -> ThresholdCheck {
    threshold_for_ratio(mode.omega_m() / cav.linewidth())
}

pub fn threshold_for_ratio(ratio: f64) -> ThresholdCheck {
    ThresholdCheck {
        ratio,
        threshold: SIDEBAND_THRESHOLD,
        passes: ratio > SIDEBAND_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;
    use crate::cavity::{CavityGeometry, DEFAULT_ETA_C};
    use crate::spectrum::{analytic_grid, mean_square_displacement, spectrum_eq1};

    fn cryo() -> (OpticalCavity, MechanicalMode) {
        let geom = CavityGeometry::new(0.025, 0.0251, 1064e-9).unwrap();
        let cav = OpticalCavity::new(geom, 2200.0, DEFAULT_ETA_C).unwrap();
        let mode = MechanicalMode::new(2.0 * PI * 557e3, 2.0 * PI * 269.0, 40e-12).unwrap();
        (cav, mode)
    }

    #[test]
    fn threshold_constant() {
        assert!((SIDEBAND_THRESHOLD - 1.0 / 32f64.sqrt()).abs() < 1e-16);
        assert!(!threshold_for_ratio(1.0 / 32f64.sqrt()).passes);
    }

    #[test]
    fn threshold_examples() {
        let (cav, _) = cryo();
        let mode = MechanicalMode::new(3.5e6, 1690.0, 40e-12).unwrap();
        let check = sideband_threshold_check(&cav, &mode);
        assert!((check.ratio - 0.204).abs() < 1e-3 && check.passes);
        let low = cav.with_finesse(1000.0).unwrap();
        assert!((low.linewidth() - 3.77e7).abs() / 3.77e7 < 1e-3);
        let check = sideband_threshold_check(&low, &mode);
        assert!((check.ratio - 0.093).abs() < 1e-3 && !check.passes);
    }

    #[test]
    fn occupancy_values() {
        let n = occupancy(2.0 * PI * 557e3, 0.29);
        assert!((n - 1.08e4).abs() / 1.08e4 < 5e-3, "{n}");
        assert_eq!(occupancy(1e6, 0.0), 0.0);
        assert!(occupancy(1e6, 1e-9) < 1e-300);
        // ħω/k_BT = ln 2
        let w = 1e6;
        let t = HBAR * w / (K_B * 2f64.ln());
        assert!((occupancy(w, t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cooling_law_values() {
        assert_eq!(cooling_law_temperature(35.0, 2.0, 2.0), 35.0);
        let t = cooling_law_temperature(35.0, 2.0 * PI * 269.0, 2.0 * PI * 32.47e3);
        assert!((t - 0.290).abs() < 1e-3);
        let (_, mode) = cryo();
        let ratio = 120.7;
        let dyn_ = EffectiveDynamics::new(mode.omega_m(), ratio * mode.gamma_0());
        assert!((thermo_from_dynamics(&mode, &dyn_, 35.0).t_eff - 0.29).abs() < 1e-3);
        let dyn_ = EffectiveDynamics::new(mode.omega_m(), 17.4 * mode.gamma_0());
        assert!((thermo_from_dynamics(&mode, &dyn_, 295.0).t_eff - 17.0).abs() < 0.1);
    }

    #[test]
    fn area_temperature_matches_cooling_law() {
        let (_, mode) = cryo();
        for ratio in [1.0, 3.0, 10.0, 30.0] {
            let g = ratio * mode.gamma_0();
            let grid = analytic_grid(mode.omega_m(), g, 8001);
            let s = spectrum_eq1(&mode, mode.omega_m(), g, 35.0, &grid).unwrap();
            let t =
                effective_temperature(&mode, mode.omega_m(), mean_square_displacement(&s).total);
            let law = cooling_law_temperature(35.0, mode.gamma_0(), g);
            assert!(((t - law) / law).abs() < 5e-3, "{ratio}: {t} vs {law}");
        }
    }

    #[test]
    fn sweep_properties() {
        let (cav, mode) = cryo();
        let w = mode.omega_m();
        let detunings: Vec<f64> = (0..=60).map(|k| k as f64 * 0.05 * w).collect();
        let rows = cooling_sweep(
            &cav,
            &mode,
            &[0.0],
            &detunings,
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        assert!(rows
            .iter()
            .all(|r| (r.t_eff().unwrap() - 35.0).abs() < 1e-9));

        let powers = [1e-3, 2e-3, 7e-3, 14e-3];
        let rows = cooling_sweep(
            &cav,
            &mode,
            &powers,
            &[w],
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        assert!(rows
            .windows(2)
            .all(|p| p[1].t_eff().unwrap() < p[0].t_eff().unwrap()));

        assert!(cooling_sweep(
            &cav,
            &mode,
            &[],
            &[w],
            35.0,
            BackactionKind::RadiationPressure
        )
        .is_err());
        assert!(cooling_sweep(
            &cav,
            &mode,
            &[1e-3],
            &[],
            35.0,
            BackactionKind::RadiationPressure
        )
        .is_err());

        let blue = cooling_sweep(
            &cav,
            &mode,
            &[14e-3],
            &[-w, w],
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        assert!(!blue[0].dynamics.stable && blue[0].thermo.is_none());
        assert!(blue[1].dynamics.stable);
    }

    #[test]
    fn collapse_ideal_and_heated() {
        let (cav, mode) = cryo();
        let w = mode.omega_m();
        let detunings: Vec<f64> = (0..=60).map(|k| k as f64 * 0.05 * w).collect();
        let powers = [1e-3, 3.7e-3, 7e-3, 14e-3];
        let rows = cooling_sweep(
            &cav,
            &mode,
            &powers,
            &detunings,
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        let ideal = collapse_diagnostic(&rows).unwrap();
        assert!((ideal.slope + 1.0).abs() < 0.01);
        assert!(ideal.max_residual < 0.01);
        assert_eq!(ideal.powers, 4);

        let beta = 0.1 * 35.0 / 14e-3;
        let heated = collapse_diagnostic(&inject_absorption_heating(&rows, beta, 35.0)).unwrap();
        assert!(heated.max_residual > 0.05, "{}", heated.max_residual);
        let lo = heated.per_power_mean_residual.first().unwrap().1;
        let hi = heated.per_power_mean_residual.last().unwrap().1;
        assert!(hi > lo);

        let single = cooling_sweep(
            &cav,
            &mode,
            &[7e-3],
            &detunings,
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        assert!((collapse_diagnostic(&single).unwrap().slope + 1.0).abs() < 0.01);

        let flat = cooling_sweep(
            &cav,
            &mode,
            &[0.0],
            &detunings,
            35.0,
            BackactionKind::RadiationPressure,
        )
        .unwrap();
        assert!(matches!(
            collapse_diagnostic(&flat),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn occupancy_monotone_and_classical(t in 1e-3f64..1e3, dt in 1e-6f64..1.0) {
            let w = 2.0 * PI * 557e3;
            prop_assert!(occupancy(w, t + dt * t) > occupancy(w, t));
            let x = K_B * t / (HBAR * w);
            if x > 100.0 {
                prop_assert!((occupancy(w, t) - x + 0.5).abs() < 0.01);
            }
        }

        #[test]
        fn sweep_rows_independent_of_grid_order(seed in 0u64..1000) {
            let (cav, mode) = cryo();
            let w = mode.omega_m();
            let mut detunings: Vec<f64> = (0..12).map(|k| (k as f64 * 0.25 - 0.5) * w).collect();
            let a = cooling_sweep(&cav, &mode, &[3e-3], &detunings, 35.0, BackactionKind::RadiationPressure).unwrap();
            let k = (seed as usize) % detunings.len();
            detunings.rotate_left(k);
            let b = cooling_sweep(&cav, &mode, &[3e-3], &detunings, 35.0, BackactionKind::RadiationPressure).unwrap();
            for row in &a {
                let twin = b.iter().find(|r| r.detuning == row.detuning).unwrap();
                prop_assert_eq!(row, twin);
            }
        }
    }
}
