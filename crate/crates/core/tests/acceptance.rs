//! Acceptance criteria 1–9. Each test prints one `PASS`/`FAIL` line; run
//! with `--nocapture` to see all of them.

use std::f64::consts::PI;

use optomech::cavity::DEFAULT_ETA_C;
use optomech::constants::K_B;
use optomech::fit::{fit_detuning_curves, synthesize_detuning_dataset, FreeParams};
use optomech::langevin::{oracle_effective_dynamics, simulate, SimConfig};
use optomech::pdh::{
    calibrate_effective_mass, calibrate_spectrum, synthesize_raw_spectrum, PdhConfig,
};
use optomech::spectrum::{analytic_grid, mean_square_displacement, spectrum_eq1};
use optomech::thermo::{
    collapse_diagnostic, cooling_law_temperature, cooling_sweep, effective_temperature,
    inject_absorption_heating, occupancy, sideband_threshold_check, SIDEBAND_THRESHOLD,
};
use optomech::{
    effective_dynamics, BackactionKind, CavityGeometry, MechanicalMode, OperatingPoint,
    OpticalCavity, PhotothermalParams,
};

const RP: BackactionKind = BackactionKind::RadiationPressure;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "{} #{n} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn geometry() -> CavityGeometry {
    CavityGeometry::new(0.025 - 3.49e-6, 0.025, 1064e-9).unwrap()
}

fn regime(finesse: f64, mass: f64) -> (OpticalCavity, MechanicalMode) {
    let cav = OpticalCavity::new(geometry(), finesse, DEFAULT_ETA_C).unwrap();
    let mode = MechanicalMode::new(2.0 * PI * 557e3, 2.0 * PI * 269.0, mass).unwrap();
    (cav, mode)
}

fn cryo() -> (OpticalCavity, MechanicalMode) {
    regime(2200.0, 40e-12)
}

fn room() -> (OpticalCavity, MechanicalMode) {
    regime(2300.0, 125e-12)
}

/// Δ grid over (0, 3ω_m].
fn detuning_grid(mode: &MechanicalMode, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|i| 3.0 * mode.omega_m() * i as f64 / points as f64)
        .collect()
}

fn cooling_temperature(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    power: f64,
    t0: f64,
    detuning: f64,
) -> f64 {
    let op = OperatingPoint::new(detuning, power, t0).unwrap();
    let d = effective_dynamics(cav, mode, &op, RP);
    cooling_law_temperature(t0, mode.gamma_0(), d.gamma_eff)
}

/// Golden-section minimum of T_eff(Δ) around the best grid point.
fn optimal_detuning(cav: &OpticalCavity, mode: &MechanicalMode, power: f64, t0: f64) -> f64 {
    let grid = detuning_grid(mode, 600);
    let t = |d: f64| cooling_temperature(cav, mode, power, t0, d);
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| t(*a).total_cmp(&t(*b)))
        .unwrap();
    let step = grid[1] - grid[0];
    let (mut lo, mut hi) = (best - step, best + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if t(a) < t(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_1_threshold_ratio() {
    let cav = OpticalCavity::new(
        CavityGeometry::new(0.025, 0.0251, 1064e-9).unwrap(),
        2200.0,
        DEFAULT_ETA_C,
    )
    .unwrap();
    let mode = MechanicalMode::new(3.5e6, 2.0 * PI * 269.0, 40e-12).unwrap();
    let check = sideband_threshold_check(&cav, &mode);
    let pass = (0.195..=0.21).contains(&check.ratio) && check.passes;
    report(
        1,
        "threshold ratio",
        pass,
        format!(
            "ω_m/κ = {:.4} (1/√32 = {:.4})",
            check.ratio, SIDEBAND_THRESHOLD
        ),
    );
}

#[test]
fn criterion_2_occupancy() {
    let n = occupancy(2.0 * PI * 557e3, 0.29);
    let pass = (n / 1.08e4 - 1.0).abs() < 0.005 && (n / 1e4 - 1.0).abs() < 0.10;
    report(
        2,
        "occupancy",
        pass,
        format!("⟨n⟩ = {n:.4e} at 557 kHz, 0.29 K"),
    );
}

#[test]
fn criterion_3_cooling_law_closure() {
    let mut worst_cooled: f64 = 0.0;
    let mut cases = 0;
    for (cav, mode, t0) in [(cryo().0, cryo().1, 35.0), (room().0, room().1, 295.0)] {
        for power in [0.1e-3, 0.3e-3, 1e-3] {
            for f in [0.25, 0.5, 1.0, 1.5, 2.5] {
                let op = OperatingPoint::new(f * mode.omega_m(), power, t0).unwrap();
                let d = effective_dynamics(&cav, &mode, &op, RP);
                if !(d.stable && d.gamma_eff / d.omega_eff < 1e-2) {
                    continue;
                }
                let grid = analytic_grid(d.omega_eff, d.gamma_eff, 4001);
                let s = spectrum_eq1(&mode, d.omega_eff, d.gamma_eff, t0, &grid).unwrap();
                let t =
                    effective_temperature(&mode, d.omega_eff, mean_square_displacement(&s).total);
                let law = cooling_law_temperature(t0, mode.gamma_0(), d.gamma_eff);
                worst_cooled = worst_cooled.max((t / law - 1.0).abs());
                cases += 1;
            }
        }
    }
    let mut worst_bath: f64 = 0.0;
    for (mode, t0) in [(cryo().1, 35.0), (room().1, 295.0)] {
        let grid = analytic_grid(mode.omega_m(), mode.gamma_0(), 4001);
        let s = spectrum_eq1(&mode, mode.omega_m(), mode.gamma_0(), t0, &grid).unwrap();
        let t = effective_temperature(&mode, mode.omega_m(), mean_square_displacement(&s).total);
        worst_bath = worst_bath.max((t / t0 - 1.0).abs());
    }
    let pass = cases >= 10 && worst_cooled < 5e-3 && worst_bath < 1e-3;
    report(
        3,
        "cooling-law closure",
        pass,
        format!(
            "max |T_area/T_law − 1| = {worst_cooled:.2e} over {cases} points, max |T_area/T_0 − 1| at Δ=0 = {worst_bath:.2e}"
        ),
    );
}

#[test]
fn criterion_4_oracle_equivalence() {
    let (cav, mode) = cryo();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (i, f) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let op = OperatingPoint::new(f * mode.omega_m(), 1e-3, 35.0).unwrap();
        let d = effective_dynamics(&cav, &mode, &op, RP);
        // ~1000 ring-down times keeps the statistical error on γ near 3 %
        let duration = (1000.0 / d.gamma_eff).max(0.05);
        let cfg = SimConfig::guarded(&cav, &mode, duration, 40 + i as u64);
        let est =
            oracle_effective_dynamics(&simulate(&cav, &mode, &op, RP, &cfg).unwrap()).unwrap();
        let (ew, eg) = (
            est.omega_eff / d.omega_eff - 1.0,
            est.gamma_eff / d.gamma_eff - 1.0,
        );
        worst = worst.max(ew.abs()).max(eg.abs());
        detail.push(format!(
            "Δ={f}ω_m: δω {:+.2}%, δγ {:+.2}% (±{:.1}%)",
            100.0 * ew,
            100.0 * eg,
            100.0 * est.gamma_err / d.gamma_eff
        ));
    }
    let op = OperatingPoint::new(0.0, 0.0, 35.0).unwrap();
    let cfg = SimConfig::guarded(&cav, &mode, 2.0, 43);
    let cfg = cfg.with_record_stride((0.5 / mode.gamma_0() / cfg.dt) as usize);
    let traj = simulate(&cav, &mode, &op, RP, &cfg).unwrap();
    let equi = traj.x_variance() / (K_B * 35.0 / (mode.mass() * mode.omega_m().powi(2))) - 1.0;
    detail.push(format!("equipartition {:+.2}%", 100.0 * equi));
    let pass = worst < 0.10 && equi.abs() < 0.05;
    report(4, "oracle equivalence (1 mW)", pass, detail.join(", "));
}

#[test]
fn criterion_5_fit_round_trips() {
    let mut worst = (0.0f64, 0.0f64);
    for (finesse, mass) in [(2300.0, 125e-12), (2200.0, 40e-12)] {
        let (cav, mode) = regime(finesse, mass);
        let detunings: Vec<f64> = (1..=25).map(|k| 0.1 * k as f64 * mode.omega_m()).collect();
        let c0 = cav.with_finesse(1.3 * finesse).unwrap();
        let m0 = mode.with_mass(0.6 * mass).unwrap();
        for seed in 0..8 {
            let data = synthesize_detuning_dataset(&cav, &mode, 1e-3, &detunings, 0.01, 100 + seed)
                .unwrap();
            let fit = fit_detuning_curves(&data, &c0, &m0, FreeParams::default()).unwrap();
            worst.0 = worst
                .0
                .max((fit.get("finesse").unwrap() / finesse - 1.0).abs());
            worst.1 = worst
                .1
                .max((fit.get("mass_kg").unwrap() / mass - 1.0).abs());
        }
    }
    let pass = worst.0 < 0.05 && worst.1 < 0.10;
    report(
        5,
        "fit round trips",
        pass,
        format!(
            "worst over 2 regimes × 8 seeds: |δF| {:.2}%, |δm| {:.2}%",
            100.0 * worst.0,
            100.0 * worst.1
        ),
    );
}

#[test]
fn criterion_6_endpoint_consistency() {
    let min_t = |(cav, mode): (OpticalCavity, MechanicalMode), power: f64, t0: f64| {
        cooling_sweep(&cav, &mode, &[power], &detuning_grid(&mode, 600), t0, RP)
            .unwrap()
            .iter()
            .filter_map(|r| r.t_eff())
            .fold(f64::INFINITY, f64::min)
    };
    let cold = min_t(cryo(), 14e-3, 35.0);
    let warm = min_t(room(), 3.7e-3, 295.0);
    let within = |t: f64, target: f64| t > target / 3.0 && t < 3.0 * target;
    report(
        6,
        "endpoint consistency",
        within(cold, 0.29) && within(warm, 17.0),
        format!("min T_eff = {cold:.3} K (target 0.29 K), {warm:.2} K (target 17 K)"),
    );
}

#[test]
fn criterion_7_optimal_detuning() {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, (cav, mode), t0, powers) in [
        ("35 K", cryo(), 35.0, [3.5e-3, 7e-3, 14e-3]),
        ("295 K", room(), 295.0, [1e-3, 2e-3, 3.7e-3]),
    ] {
        for p in powers {
            let ratio = optimal_detuning(&cav, &mode, p, t0) / mode.omega_m();
            pass &= (ratio - 1.0).abs() < 0.20;
            detail.push(format!("{name} {:.1} mW: {ratio:.3}", p * 1e3));
        }
    }
    report(
        7,
        "optimal detuning",
        pass,
        format!("argmin Δ/ω_m: {}", detail.join(", ")),
    );
}

#[test]
fn criterion_8_force_discrimination() {
    let (cav, mode) = cryo();
    let t0 = 35.0;
    let pt =
        BackactionKind::Photothermal(PhotothermalParams::new(10.0 / mode.omega_m(), 1.0).unwrap());
    let grid = detuning_grid(&mode, 120);
    let max_diff = grid
        .iter()
        .map(|&d| {
            let op = OperatingPoint::new(d, 1e-3, t0).unwrap();
            let g_rp = effective_dynamics(&cav, &mode, &op, RP).gamma_eff;
            let g_pt = effective_dynamics(&cav, &mode, &op, pt).gamma_eff;
            (g_pt / g_rp - 1.0).abs()
        })
        .fold(0.0, f64::max);

    let powers = [3.5e-3, 7e-3, 14e-3];
    let rows = cooling_sweep(&cav, &mode, &powers, &grid, t0, RP).unwrap();
    let ideal = collapse_diagnostic(&rows).unwrap().max_residual;
    let beta = 0.1 * t0 / 14e-3;
    let heated = collapse_diagnostic(&inject_absorption_heating(&rows, beta, t0))
        .unwrap()
        .max_residual;

    let pass = max_diff > 0.20 && ideal < 0.01 && heated > 0.05;
    report(
        8,
        "force discrimination",
        pass,
        format!(
            "max |γ_PT/γ_RP − 1| = {:.1}%, collapse residual ideal {:.2e}, heated {:.1}%",
            100.0 * max_diff,
            ideal,
            100.0 * heated
        ),
    );
}

#[test]
fn criterion_9_calibration_chain() {
    let pdh = PdhConfig::default();
    let grid = |mode: &MechanicalMode| -> Vec<f64> {
        let step = mode.gamma_0() / 4.0;
        let lo = mode.omega_m() - 40.0 * mode.gamma_0();
        let n = ((pdh.ref_freq() + 20.0 * step - lo) / step) as usize;
        (0..n).map(|i| lo + i as f64 * step).collect()
    };
    let mut round_trip: f64 = 0.0;
    let mut across: f64 = 0.0;
    let mut mass_err: f64 = 0.0;
    for ((cav, mode), t0) in [(room(), 295.0), (cryo(), 35.0)] {
        let kappa = cav.linewidth();
        let truth = spectrum_eq1(&mode, mode.omega_m(), mode.gamma_0(), t0, &grid(&mode)).unwrap();
        let calibrated = |detuning: f64| {
            let op = OperatingPoint::new(detuning, 0.0, t0).unwrap();
            let raw = synthesize_raw_spectrum(&cav, &mode, &op, &pdh, &truth, 0.0).unwrap();
            calibrate_spectrum(&raw, &pdh, &cav).unwrap()
        };
        let at0 = calibrated(0.0);
        let at1 = calibrated(0.35 * kappa);
        for (a, b, t) in at0
            .psd()
            .iter()
            .zip(at1.psd())
            .zip(truth.psd())
            .map(|((a, b), t)| (a, b, t))
        {
            round_trip = round_trip.max((a / t - 1.0).abs());
            across = across.max((b / a - 1.0).abs());
        }
        let m = calibrate_effective_mass(&at0, t0).unwrap();
        mass_err = mass_err.max((m / mode.mass() - 1.0).abs());
    }
    let pass = round_trip < 1e-9 && across < 0.02 && mass_err < 0.05;
    report(
        9,
        "calibration chain",
        pass,
        format!(
            "round trip {round_trip:.1e}, Δ-independence {across:.1e}, effective mass {:.3}%",
            100.0 * mass_err
        ),
    );
}
