use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lm::{nls_minimize, FitResult, LmOptions};
use crate::backaction::{effective_dynamics, BackactionKind};
use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::error::{Error, Result};

/// Condition number of the covariance above which (F, m) are deemed
/// unidentifiable from the data.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningRow {
    #[serde(rename = "detuning_rad_s")]
    pub detuning: f64,
    #[serde(rename = "power_W")]
    pub power: f64,
    #[serde(rename = "omega_eff_rad_s")]
    pub omega_eff: f64,
    #[serde(rename = "gamma_eff_rad_s")]
    pub gamma_eff: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningDataset {
    rows: Vec<DetuningRow>,
}

impl DetuningDataset {
    /// Requires at least 4 rows over at least 3 distinct detunings.
    pub fn new(rows: Vec<DetuningRow>) -> Result<Self> {
        if rows.len() < 4 {
            return Err(Error::invalid(
                "rows",
                format!("need >= 4 rows, got {}", rows.len()),
            ));
        }
        let mut distinct: Vec<f64> = rows.iter().map(|r| r.detuning).collect();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::invalid(
                "rows",
                format!("need >= 3 distinct detunings, got {}", distinct.len()),
            ));
        }
        if let Some(r) = rows.iter().find(|r| {
            !(r.detuning.is_finite()
                && r.power.is_finite()
                && r.power >= 0.0
                && r.omega_eff.is_finite()
                && r.gamma_eff.is_finite()
                && r.weight.is_finite()
                && r.weight > 0.0)
        }) {
            return Err(Error::invalid(
                "rows",
                format!("non-finite or invalid row {r:?}"),
            ));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[DetuningRow] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeParams {
    pub finesse: bool,
    pub mass: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        Self {
            finesse: true,
            mass: true,
        }
    }
}

fn spread(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Joint fit of ω_eff(Δ) and γ_eff(Δ) from the radiation-pressure model with
/// finesse and effective mass free; everything else comes from the
/// templates. Each observable's residuals are normalised by its sample
/// spread and multiplied by √weight. Returned parameter names are
/// `finesse` and `mass_kg` (only the free ones).
pub fn fit_detuning_curves(
    data: &DetuningDataset,
    cav_template: &OpticalCavity,
    mode_template: &MechanicalMode,
    free: FreeParams,
) -> Result<FitResult> {
    if !(free.finesse || free.mass) {
        return Err(Error::invalid(
            "free",
            "at least one of finesse/mass must be free",
        ));
    }
    let rows = data.rows();
    let s_w = spread(rows.iter().map(|r| r.omega_eff));
    let s_g = spread(rows.iter().map(|r| r.gamma_eff));
    if !(s_w > 0.0 && s_g > 0.0) {
        return Err(Error::Degenerate(
            "observables do not vary across the dataset".into(),
        ));
    }
    let f0 = cav_template.finesse();
    let m0 = mode_template.mass();

    let unpack = |q: &[f64]| -> (f64, f64) {
        let mut it = q.iter();
        let f = if free.finesse {
            f0 * it.next().unwrap().exp()
        } else {
            f0
        };
        let m = if free.mass {
            m0 * it.next().unwrap().exp()
        } else {
            m0
        };
        (f, m)
    };
    let residuals = |q: &[f64]| -> Vec<f64> {
        let (f, m) = unpack(q);
        let (Ok(cav), Ok(mode)) = (cav_template.with_finesse(f), mode_template.with_mass(m)) else {
            return vec![f64::NAN; 2 * rows.len()];
        };
        let mut out = Vec::with_capacity(2 * rows.len());
        for r in rows {
            let op = OperatingPoint {
                detuning: r.detuning,
                power: r.power,
                bath_temperature: 1.0,
            };
            let eff = effective_dynamics(&cav, &mode, &op, BackactionKind::RadiationPressure);
            let w = r.weight.sqrt();
            out.push(w * (eff.omega_eff - r.omega_eff) / s_w);
            out.push(w * (eff.gamma_eff - r.gamma_eff) / s_g);
        }
        out
    };
    let n_free = usize::from(free.finesse) + usize::from(free.mass);
    let fit = nls_minimize(residuals, &vec![0.0; n_free], &LmOptions::default())?;
    if fit.condition_number > MAX_CONDITION {
        return Err(Error::Unidentifiable {
            condition: fit.condition_number,
        });
    }
    let scales: Vec<f64> = [(free.finesse, f0), (free.mass, m0)]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
    let names: Vec<&str> = [(free.finesse, "finesse"), (free.mass, "mass_kg")]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
    Ok(fit
        .transformed(|i, q| scales[i] * q.exp(), |i, q| scales[i] * q.exp())
        .with_names(&names))
}

/// Model (ω_eff, γ_eff) at each detuning with additive Gaussian scatter:
/// σ_γ = `noise`·γ_eff per point and σ_ω = `noise`·max|δω| over the sweep.
pub fn synthesize_detuning_dataset(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    power: f64,
    detunings: &[f64],
    noise: f64,
    seed: u64,
) -> Result<DetuningDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effs: Vec<_> = detunings
        .iter()
        .map(|&d| {
            let op = OperatingPoint::new(d, power, 1.0)?;
            Ok((
                d,
                effective_dynamics(cav, mode, &op, BackactionKind::RadiationPressure),
            ))
        })
        .collect::<Result<_>>()?;
    let max_shift = effs
        .iter()
        .map(|(_, e)| (e.omega_eff - mode.omega_m()).abs())
        .fold(0.0, f64::max);
    let rows = effs
        .into_iter()
        .map(|(d, e)| {
            let xw: f64 = StandardNormal.sample(&mut rng);
            let xg: f64 = StandardNormal.sample(&mut rng);
            DetuningRow {
                detuning: d,
                power,
                omega_eff: e.omega_eff + noise * max_shift * xw,
                gamma_eff: e.gamma_eff * (1.0 + noise * xg),
                weight: 1.0,
            }
        })
        .collect();
    DetuningDataset::new(rows)
}
