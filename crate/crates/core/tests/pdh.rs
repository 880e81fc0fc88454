use std::f64::consts::PI;

use optomech::cavity::DEFAULT_ETA_C;
use optomech::pdh::{
    calibrate_effective_mass, calibrate_spectrum, synthesize_raw_spectrum, transduction_gain,
    PdhConfig, RawSpectrum,
};
use optomech::spectrum::spectrum_eq1;
use optomech::{
    CavityGeometry, Error, MechanicalMode, OperatingPoint, OpticalCavity, Provenance,
    SpectrumSeries,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn setup(finesse: f64, mass: f64) -> (OpticalCavity, MechanicalMode) {
    let geom = CavityGeometry::new(0.025 - 3.49e-6, 0.025, 1064e-9).unwrap();
    let cav = OpticalCavity::new(geom, finesse, DEFAULT_ETA_C).unwrap();
    let mode = MechanicalMode::new(2.0 * PI * 557e3, 2.0 * PI * 269.0, mass).unwrap();
    (cav, mode)
}

/// Uniform grid from 40γ below the peak to past the reference tone.
fn grid(mode: &MechanicalMode, pdh: &PdhConfig) -> Vec<f64> {
    let step = mode.gamma_0() / 4.0;
    let lo = mode.omega_m() - 40.0 * mode.gamma_0();
    let n = ((pdh.ref_freq() + 20.0 * step - lo) / step) as usize;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

fn thermal(mode: &MechanicalMode, t: f64, pdh: &PdhConfig) -> SpectrumSeries {
    spectrum_eq1(mode, mode.omega_m(), mode.gamma_0(), t, &grid(mode, pdh)).unwrap()
}

fn locked(detuning: f64, t: f64) -> OperatingPoint {
    OperatingPoint::new(detuning, 0.0, t).unwrap()
}

fn worst_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / y - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn zero_noise_round_trip_is_exact() {
    let (cav, mode) = setup(2200.0, 40e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 35.0, &pdh);
    for detuning in [0.0, 0.2 * cav.linewidth(), -0.6 * cav.linewidth()] {
        let raw = synthesize_raw_spectrum(&cav, &mode, &locked(detuning, 35.0), &pdh, &truth, 0.0)
            .unwrap();
        let cal = calibrate_spectrum(&raw, &pdh, &cav).unwrap();
        let err = worst_rel(cal.psd(), truth.psd());
        assert!(err < 1e-9, "Δ = {detuning}: {err}");
    }
}

#[test]
fn reference_area_matches_construction() {
    let (cav, mode) = setup(2200.0, 40e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 35.0, &pdh);
    let detuning = 0.3 * cav.linewidth();
    let raw =
        synthesize_raw_spectrum(&cav, &mode, &locked(detuning, 35.0), &pdh, &truth, 0.0).unwrap();
    let w = raw.omega();
    let k = w
        .iter()
        .position(|&x| (x - pdh.ref_freq()).abs() <= 0.5 * (w[1] - w[0]))
        .unwrap();
    let g = transduction_gain(&cav, &pdh, detuning, w[k]).unwrap();
    let area = (raw.psd()[k] - g * g * truth.psd()[k]) * (w[1] - w[0]);
    let x_ref = pdh.reference_displacement(&cav);
    assert!((area / (g * g) / (x_ref * x_ref) - 1.0).abs() < 1e-9);
}

#[test]
fn calibration_removes_detuning_dependence() {
    let (cav, mode) = setup(2300.0, 125e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 295.0, &pdh);
    let kappa = cav.linewidth();
    let reference = calibrate_spectrum(
        &synthesize_raw_spectrum(&cav, &mode, &locked(0.0, 295.0), &pdh, &truth, 0.0).unwrap(),
        &pdh,
        &cav,
    )
    .unwrap();
    for detuning in [-0.8, -0.3, 0.1, 0.4, 0.9].map(|f| f * kappa) {
        let raw = synthesize_raw_spectrum(&cav, &mode, &locked(detuning, 295.0), &pdh, &truth, 0.0)
            .unwrap();
        let cal = calibrate_spectrum(&raw, &pdh, &cav).unwrap();
        assert!(worst_rel(cal.psd(), reference.psd()) < 0.02);
    }
}

#[test]
fn round_trip_with_floor_within_one_percent() {
    let (cav, mode) = setup(2200.0, 40e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 35.0, &pdh);
    let op = locked(0.1 * cav.linewidth(), 35.0);
    let g = transduction_gain(&cav, &pdh, op.detuning, mode.omega_m()).unwrap();
    let peak = truth.psd().iter().cloned().fold(0.0, f64::max);
    let floor = 1e-7 * g * g * peak;
    let raw = synthesize_raw_spectrum(&cav, &mode, &op, &pdh, &truth, floor).unwrap();
    let cal = calibrate_spectrum(&raw, &pdh, &cav).unwrap();
    // compare over the line, where the floor is negligible
    let near: Vec<usize> = (0..truth.len())
        .filter(|&i| (truth.omega()[i] - mode.omega_m()).abs() < 10.0 * mode.gamma_0())
        .collect();
    let err = near
        .iter()
        .map(|&i| (cal.psd()[i] / truth.psd()[i] - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.01, "{err}");
}

#[test]
fn reference_deviation_cancels() {
    let (cav, mode) = setup(2200.0, 40e-12);
    let pdh = PdhConfig::default();
    let doubled = pdh
        .with_ref_freq_deviation(2.0 * pdh.ref_freq_deviation())
        .unwrap();
    assert!(
        (doubled.reference_displacement(&cav) / pdh.reference_displacement(&cav) - 2.0).abs()
            < 1e-12
    );
    let truth = thermal(&mode, 35.0, &pdh);
    let op = locked(0.0, 35.0);
    let a = calibrate_spectrum(
        &synthesize_raw_spectrum(&cav, &mode, &op, &pdh, &truth, 0.0).unwrap(),
        &pdh,
        &cav,
    );
    let b = calibrate_spectrum(
        &synthesize_raw_spectrum(&cav, &mode, &op, &doubled, &truth, 0.0).unwrap(),
        &doubled,
        &cav,
    );
    assert!(worst_rel(a.unwrap().psd(), b.unwrap().psd()) < 1e-9);
}

#[test]
fn effective_mass_recovery() {
    for (finesse, mass, t) in [(2300.0, 125e-12, 295.0), (2200.0, 40e-12, 35.0)] {
        let (cav, mode) = setup(finesse, mass);
        let pdh = PdhConfig::default();
        let truth = thermal(&mode, t, &pdh);
        let raw = synthesize_raw_spectrum(&cav, &mode, &locked(0.0, t), &pdh, &truth, 0.0).unwrap();
        let cal = calibrate_spectrum(&raw, &pdh, &cav).unwrap();
        let m = calibrate_effective_mass(&cal, t).unwrap();
        assert!((m / mass - 1.0).abs() < 0.05, "{m} vs {mass}");
        let half = calibrate_effective_mass(&cal, t / 2.0).unwrap();
        assert!((half / m - 0.5).abs() < 1e-12);
    }
}

#[test]
fn effective_mass_recovery_with_measurement_noise() {
    let (cav, mode) = setup(2300.0, 125e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 295.0, &pdh);
    let raw = synthesize_raw_spectrum(
        &cav,
        &mode,
        &locked(0.2 * cav.linewidth(), 295.0),
        &pdh,
        &truth,
        0.0,
    )
    .unwrap();
    // 5 % multiplicative scatter, as left by a few hundred spectral averages
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(1.0f64, 0.05).unwrap();
    let psd = raw
        .psd()
        .iter()
        .map(|p| p * noise.sample(&mut rng).max(0.0))
        .collect();
    let noisy = RawSpectrum::new(
        raw.omega().to_vec(),
        psd,
        raw.detuning(),
        Provenance::External,
    )
    .unwrap();
    let cal = calibrate_spectrum(&noisy, &pdh, &cav).unwrap();
    assert_eq!(cal.provenance(), Provenance::External);
    let m = calibrate_effective_mass(&cal, 295.0).unwrap();
    assert!((m / 125e-12 - 1.0).abs() < 0.05, "{m}");
}

#[test]
fn reference_guards() {
    let (cav, mode) = setup(2200.0, 40e-12);
    let pdh = PdhConfig::default();
    let truth = thermal(&mode, 35.0, &pdh);
    let op = locked(0.0, 35.0);

    let on_peak = pdh
        .with_ref_freq(mode.omega_m() + 3.0 * mode.gamma_0())
        .unwrap();
    assert!(matches!(
        synthesize_raw_spectrum(&cav, &mode, &op, &on_peak, &truth, 0.0),
        Err(Error::InvalidParameter {
            field: "ref_freq_rad_s",
            ..
        })
    ));

    let off_grid = pdh.with_ref_freq(2.0 * pdh.ref_freq()).unwrap();
    assert!(synthesize_raw_spectrum(&cav, &mode, &op, &off_grid, &truth, 0.0).is_err());

    assert!(matches!(
        synthesize_raw_spectrum(
            &cav,
            &mode,
            &locked(1.2 * cav.linewidth(), 35.0),
            &pdh,
            &truth,
            0.0
        ),
        Err(Error::OutOfLockRange { .. })
    ));

    // a spectrum without the tone cannot be calibrated
    let raw = synthesize_raw_spectrum(&cav, &mode, &op, &pdh, &truth, 0.0).unwrap();
    let g2 = transduction_gain(&cav, &pdh, 0.0, 1.0).unwrap().powi(2);
    let plain = RawSpectrum::new(
        raw.omega().to_vec(),
        truth.psd().iter().map(|p| p * g2).collect(),
        0.0,
        Provenance::External,
    )
    .unwrap();
    assert!(matches!(
        calibrate_spectrum(&plain, &pdh, &cav),
        Err(Error::WeakReference { .. })
    ));
}
