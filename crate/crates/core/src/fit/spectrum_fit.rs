use std::f64::consts::PI;

use super::lm::{nls_minimize, FitResult, LmOptions};
use crate::error::{Error, Result};
use crate::spectrum::{estimate_peak, median, SpectrumSeries};

/// Minimum max/median contrast for a spectrum to count as having a peak.
pub const MIN_PEAK_CONTRAST: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectrumFitOptions {
    /// Fit the additive floor; when false it is held at zero.
    pub fit_floor: bool,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        Self { fit_floor: true }
    }
}

/// Fits S(ω) = A/((ω_eff² − ω²)² + 4γ_eff²ω²) + floor.
///
/// Residuals are logarithmic, ln S_model − ln S_data, which matches the
/// multiplicative scatter of periodogram estimates. Internally the
/// parameters are A/A₀, ω_eff/ω₀, ln(γ_eff/γ₀) and floor/S_peak, where the
/// subscript-0 values come from the peak bin and its half-power width.
/// Returned parameters are `A`, `omega_eff`, `gamma_eff`, `floor` in the
/// units of the series.
pub fn fit_spectrum(s: &SpectrumSeries) -> Result<FitResult> {
    fit_spectrum_with(s, SpectrumFitOptions::default())
}

/// [`fit_spectrum`] with options. With the floor held, the result still
/// reports a `floor` of zero with zero error.
pub fn fit_spectrum_with(s: &SpectrumSeries, options: SpectrumFitOptions) -> Result<FitResult> {
    let omega = s.omega();
    let psd = s.psd();
    let peak = estimate_peak(omega, psd).ok_or(Error::NoPeak { ratio: 1.0 })?;
    if !(peak.contrast > MIN_PEAK_CONTRAST) {
        return Err(Error::NoPeak {
            ratio: peak.contrast,
        });
    }
    let (w0, g0, h) = (peak.omega, peak.gamma, peak.height);
    let shape =
        |w: f64| 4.0 * g0 * g0 * w0 * w0 / ((w0 * w0 - w * w).powi(2) + 4.0 * g0 * g0 * w * w);

    // floor guess: edge median with the line's own contribution removed
    let edge = (omega.len() / 10).max(2);
    let edges: Vec<usize> = (0..edge).chain(omega.len() - edge..omega.len()).collect();
    let excess: Vec<f64> = edges
        .iter()
        .map(|&i| psd[i] / h - shape(omega[i]))
        .collect();
    let floor0 = if options.fit_floor {
        median(&excess).max(0.0)
    } else {
        0.0
    };

    let data: Vec<(f64, f64)> = omega
        .iter()
        .zip(psd)
        .filter(|(_, p)| **p > 0.0)
        .map(|(w, p)| (*w, (p / h).ln()))
        .collect();

    let residuals = |q: &[f64]| -> Vec<f64> {
        let (a, w, g) = (q[0], q[1] * w0, q[2].exp() * g0);
        let floor = q.get(3).copied().unwrap_or(0.0);
        data.iter()
            .map(|&(x, ln_d)| {
                let model = a * 4.0 * g0 * g0 * w0 * w0
                    / ((w * w - x * x).powi(2) + 4.0 * g * g * x * x)
                    + floor;
                if model > 0.0 {
                    model.ln() - ln_d
                } else {
                    f64::NAN
                }
            })
            .collect()
    };
    let init = [1.0 - floor0, 1.0, 0.0, floor0];
    let n_free = if options.fit_floor { 4 } else { 3 };
    let mut fit = nls_minimize(residuals, &init[..n_free], &LmOptions::default())?;
    if !options.fit_floor {
        fit.params.push(0.0);
        fit.std_errors.push(0.0);
        for row in &mut fit.covariance {
            row.push(0.0);
        }
        fit.covariance.push(vec![0.0; 4]);
    }
    let a0 = h * 4.0 * g0 * g0 * w0 * w0;
    Ok(fit
        .transformed(
            |i, q| match i {
                0 => q * a0,
                1 => q * w0,
                2 => q.exp() * g0,
                _ => q * h,
            },
            |i, q| match i {
                0 => a0,
                1 => w0,
                2 => q.exp() * g0,
                _ => h,
            },
        )
        .with_names(&["A", "omega_eff", "gamma_eff", "floor"]))
}

/// ∫₀^∞ of the fitted line (floor excluded): Aπ/(4γ_eff ω_eff²).
pub fn peak_area(fit: &FitResult) -> Option<f64> {
    let a = fit.get("A")?;
    let w = fit.get("omega_eff")?;
    let g = fit.get("gamma_eff")?;
    Some(a * PI / (4.0 * g * w * w))
}
