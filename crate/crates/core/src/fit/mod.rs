//! Nonlinear least squares and the two levels of fitting: single spectra
//! against the thermal line shape, and detuning sweeps of (ω_eff, γ_eff)
//! against the backaction model.

mod detuning;
mod lm;
mod spectrum_fit;

pub use detuning::{
    fit_detuning_curves, synthesize_detuning_dataset, DetuningDataset, DetuningRow, FreeParams,
};
pub use lm::{nls_minimize, FitResult, LmOptions};
pub use spectrum_fit::{fit_spectrum, fit_spectrum_with, peak_area, SpectrumFitOptions};
