//! Time-domain stochastic simulation of the coupled cavity field and
//! mechanical mode.
//!
//! Each step is split symmetrically: half a step of the exact free
//! damped-oscillator map, the field advanced by an exponential integrator
//! with the mirror frozen at that midpoint, a velocity impulse from the
//! thermal increment and the step-averaged optical force, and the second
//! half of the free map. Without optical drive the halves are fused. The
//! displacement `x` is measured from the loaded equilibrium, so the
//! operating-point detuning is the detuning seen at `x = 0` and the
//! optical force is ħG(|a|² − n̄).
//!
//! The thermal force is generated as Wiener increments on blocks of length
//! `dt`. With `substeps > 1` each block is split by Brownian-bridge
//! refinement, so runs that differ only in `substeps` share one noise path.

mod oracle;
mod welch;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use oracle::{oracle_effective_dynamics, OracleEstimate};
pub use welch::{welch_psd, welch_psd_samples};

use crate::backaction::BackactionKind;
use crate::cavity::{MechanicalMode, OperatingPoint, OpticalCavity};
use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};

/// Largest supported refinement of a noise block.
pub const MAX_SUBSTEPS: u32 = 256;

const NOISE_STREAM: u64 = 0;
const BRIDGE_STREAM: u64 = 1;
const KICK_STREAM: u64 = 2;
// words reserved per block on the bridge stream
const BRIDGE_WORDS_LOG2: u32 = 14;

/// How the intracavity field is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldModel {
    /// Full field equation.
    #[default]
    Full,
    /// Photon number slaved to the mirror through the static Lorentzian
    /// plus a first-order lag of time constant [`adiabatic_lag`]. Only for
    /// speed comparisons.
    Adiabatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Noise block length (s). The integration step is `dt / substeps`.
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// Recorded duration after the transient (s).
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub seed: u64,
    #[serde(rename = "transient_discard_s")]
    pub transient_discard: f64,
    /// Record every `record_stride` blocks.
    pub record_stride: usize,
    pub substeps: u32,
    pub field_model: FieldModel,
    /// Initial (x, v); a thermal draw at T₀ when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<(f64, f64)>,
}

/// τ = κ/(Δ² + κ²/4), the first-order retardation of the intracavity
/// photon number in response to a slow mirror displacement.
pub fn adiabatic_lag(cav: &OpticalCavity, detuning: f64) -> f64 {
    let kappa = cav.linewidth();
    kappa / (detuning * detuning + 0.25 * kappa * kappa)
}

/// Largest step allowed by the resolution guard, min(2π/ω_m, 1/κ)/20.
pub fn dt_guard(cav: &OpticalCavity, mode: &MechanicalMode) -> f64 {
    (2.0 * PI / mode.omega_m()).min(1.0 / cav.linewidth()) / 20.0
}

impl SimConfig {
    /// Config at the guard step, discarding 10/γ_0 and recording roughly
    /// eight samples per mechanical period.
    pub fn guarded(cav: &OpticalCavity, mode: &MechanicalMode, duration: f64, seed: u64) -> Self {
        let dt = dt_guard(cav, mode);
        let period = 2.0 * PI / mode.omega_m();
        Self {
            dt,
            duration,
            seed,
            transient_discard: 10.0 / mode.gamma_0(),
            record_stride: ((period / 8.0) / dt).floor().max(1.0) as usize,
            substeps: 1,
            field_model: FieldModel::Full,
            initial_state: None,
        }
    }

    pub fn with_substeps(mut self, substeps: u32) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_field_model(mut self, model: FieldModel) -> Self {
        self.field_model = model;
        self
    }

    pub fn with_initial_state(mut self, x: f64, v: f64) -> Self {
        self.initial_state = Some((x, v));
        self
    }

    pub fn step(&self) -> f64 {
        self.dt / f64::from(self.substeps)
    }

    pub fn sample_dt(&self) -> f64 {
        self.dt * self.record_stride as f64
    }

    pub fn validate(&self, cav: &OpticalCavity, mode: &MechanicalMode) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.transient_discard.is_finite() && self.transient_discard >= 0.0) {
            return bad(format!(
                "transient_discard must be >= 0, got {}",
                self.transient_discard
            ));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        if !(self.substeps.is_power_of_two() && self.substeps <= MAX_SUBSTEPS) {
            return bad(format!(
                "substeps must be a power of two <= {MAX_SUBSTEPS}, got {}",
                self.substeps
            ));
        }
        let guard = dt_guard(cav, mode);
        if self.step() > guard * (1.0 + 1e-12) {
            return bad(format!(
                "step {} s exceeds the resolution guard {guard} s",
                self.step()
            ));
        }
        if self.duration < self.sample_dt() {
            return bad("duration shorter than one record interval".into());
        }
        if self.transient_discard < 10.0 / mode.gamma_0() {
            log::warn!(
                "transient_discard {} s is below 10/γ_0 = {} s; the record may not be stationary",
                self.transient_discard,
                10.0 / mode.gamma_0()
            );
        }
        Ok(())
    }
}

/// Parameters a trajectory was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub cavity: OpticalCavity,
    pub mode: MechanicalMode,
    pub operating_point: OperatingPoint,
    pub kind: BackactionKind,
    pub config: SimConfig,
}

/// Uniformly sampled record. `field_re`/`field_im` are in √photons and
/// refer to the frame rotating at the laser frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: TrajectoryParams,
    pub t0: f64,
    pub sample_dt: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub field_re: Vec<f64>,
    pub field_im: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.sample_dt * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Sample variance of x.
    pub fn x_variance(&self) -> f64 {
        let n = self.x.len() as f64;
        let mean = self.x.iter().sum::<f64>() / n;
        self.x.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

/// Fills `out` (length a power of two) with a Brownian-bridge refinement
/// of the increment `total` over an interval of length `len`, drawing
/// coarse levels first so shallower refinements are prefixes.
fn bridge(total: f64, len: f64, rng: &mut ChaCha8Rng, out: &mut [f64], scratch: &mut Vec<f64>) {
    out[0] = total;
    let mut filled = 1;
    let mut span = len;
    while filled < out.len() {
        scratch.clear();
        scratch.extend_from_slice(&out[..filled]);
        for (k, &w) in scratch.iter().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            let first = 0.5 * w + 0.5 * span.sqrt() * xi;
            out[2 * k] = first;
            out[2 * k + 1] = w - first;
        }
        filled *= 2;
        span *= 0.5;
    }
}

/// exp(A h) for ẋ = v, v̇ = −ω_m²x − 2γ_0v (underdamped since Q > 1).
fn oscillator_map(mode: &MechanicalMode, h: f64) -> [[f64; 2]; 2] {
    let (w, g) = (mode.omega_m(), mode.gamma_0());
    let wd = (w * w - g * g).sqrt();
    let (s, c) = (wd * h).sin_cos();
    let e = (-g * h).exp();
    [
        [e * (c + g / wd * s), e * s / wd],
        [-e * w * w / wd * s, e * (c - g / wd * s)],
    ]
}

struct Optics {
    /// κ/2
    half_kappa: f64,
    detuning: f64,
    pull: f64,
    drive: f64,
    n_bar: f64,
    /// ħG/m
    accel_per_photon: f64,
    decay: f64,
    slow_decay: f64,
    photothermal: Option<(f64, f64)>,
}

/// Integrates the coupled Langevin equations.
///
/// The field starts at its steady state for `x = 0` and the mirror at a
/// thermal draw at T₀. Errors with `Divergence` once |G x| exceeds κ/2,
/// where the cavity resonance has moved by half a linewidth and the
/// linearised backaction no longer applies (a blue-detuned mode grows
/// into a limit cycle there rather than to infinity).
pub fn simulate(
    cav: &OpticalCavity,
    mode: &MechanicalMode,
    op: &OperatingPoint,
    kind: BackactionKind,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(cav, mode)?;
    let (w2, two_gamma, mass) = (mode.omega_m().powi(2), 2.0 * mode.gamma_0(), mode.mass());
    let temperature = op.bath_temperature;
    let h = cfg.step();
    let substeps = cfg.substeps as usize;
    let kappa = cav.linewidth();
    let pull = cav.frequency_pull();
    let x_limit = 0.5 * kappa / pull;

    let optics = (op.power > 0.0).then(|| Optics {
        half_kappa: 0.5 * kappa,
        detuning: op.detuning,
        pull,
        drive: cav.drive_amplitude(op.power),
        n_bar: cav.intracavity_photons(op),
        accel_per_photon: HBAR * pull / mass,
        decay: (-0.5 * kappa * h).exp(),
        slow_decay: 1.0 - (-h / adiabatic_lag(cav, op.detuning)).exp(),
        photothermal: match kind {
            BackactionKind::RadiationPressure => None,
            BackactionKind::Photothermal(p) => {
                Some((p.strength_ratio(), 1.0 - (-h / p.tau_pt()).exp()))
            }
        },
    });

    let mut kick = ChaCha8Rng::seed_from_u64(cfg.seed);
    kick.set_stream(KICK_STREAM);
    let sx = (K_B * temperature / (mass * w2)).sqrt();
    let sv = (K_B * temperature / mass).sqrt();
    let (mut x, mut v) = match cfg.initial_state {
        Some(state) => state,
        None => (
            sx * kick.sample::<f64, _>(StandardNormal),
            sv * kick.sample::<f64, _>(StandardNormal),
        ),
    };

    let mut a = match &optics {
        Some(o) => Complex64::new(o.drive, 0.0) / Complex64::new(o.half_kappa, o.detuning),
        None => Complex64::new(0.0, 0.0),
    };
    // adiabatic photon number and photothermal force state
    let mut n_slow = optics.as_ref().map_or(0.0, |o| o.n_bar);
    let mut y = 0.0;

    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise.set_stream(NOISE_STREAM);
    let mut bridge_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    bridge_rng.set_stream(BRIDGE_STREAM);
    // velocity kick per unit Wiener increment, √(4mγ₀k_BT₀)/m
    let kick_scale = (2.0 * two_gamma * K_B * temperature / mass).sqrt();
    let thermal = kick_scale > 0.0;
    let sqrt_dt = cfg.dt.sqrt();

    let discard_blocks = (cfg.transient_discard / cfg.dt).round() as u64;
    let record_blocks = (cfg.duration / cfg.dt).round() as u64;
    let stride = cfg.record_stride as u64;
    let n_samples = (record_blocks / stride) as usize;
    let mut traj = Trajectory {
        params: TrajectoryParams {
            cavity: *cav,
            mode: *mode,
            operating_point: *op,
            kind,
            config: *cfg,
        },
        t0: discard_blocks as f64 * cfg.dt,
        sample_dt: cfg.sample_dt(),
        x: Vec::with_capacity(n_samples),
        v: Vec::with_capacity(n_samples),
        field_re: Vec::with_capacity(n_samples),
        field_im: Vec::with_capacity(n_samples),
    };

    let [[m00, m01], [m10, m11]] = oscillator_map(mode, h);
    let [[h00, h01], [h10, h11]] = oscillator_map(mode, 0.5 * h);
    let photons = |a: &Complex64, n_slow: f64| match cfg.field_model {
        FieldModel::Full => a.norm_sqr(),
        FieldModel::Adiabatic => n_slow,
    };
    let mut increments = vec![0.0; substeps];
    let mut scratch = Vec::with_capacity(substeps);
    let total_blocks = discard_blocks + n_samples as u64 * stride;
    // blocks until the next recorded sample
    let mut countdown = discard_blocks;
    for block in 0..total_blocks {
        if countdown == 0 {
            traj.x.push(x);
            traj.v.push(v);
            traj.field_re.push(a.re);
            traj.field_im.push(a.im);
            countdown = stride;
        }
        countdown -= 1;
        if thermal {
            let dw = sqrt_dt * noise.sample::<f64, _>(StandardNormal);
            if substeps == 1 {
                increments[0] = dw;
            } else {
                bridge_rng.set_word_pos(u128::from(block) << BRIDGE_WORDS_LOG2);
                bridge(dw, cfg.dt, &mut bridge_rng, &mut increments, &mut scratch);
            }
        }
        match &optics {
            None => {
                for inc in &increments {
                    v += kick_scale * inc;
                    (x, v) = (m00 * x + m01 * v, m10 * x + m11 * v);
                }
            }
            Some(o) => {
                for inc in &increments {
                    (x, v) = (h00 * x + h01 * v, h10 * x + h11 * v);
                    let before = photons(&a, n_slow);
                    let lambda = Complex64::new(o.half_kappa, o.detuning - o.pull * x);
                    match cfg.field_model {
                        FieldModel::Full => {
                            let (s, c) = (-lambda.im * h).sin_cos();
                            let prop = Complex64::new(c, s) * o.decay;
                            a = a * prop + (1.0 - prop) * o.drive / lambda;
                        }
                        FieldModel::Adiabatic => {
                            a = o.drive / lambda;
                            n_slow += (a.norm_sqr() - n_slow) * o.slow_decay;
                        }
                    }
                    let mean_photons = 0.5 * (before + photons(&a, n_slow));
                    let rp = o.accel_per_photon * (mean_photons - o.n_bar);
                    let force = match o.photothermal {
                        None => rp,
                        Some((strength, relax)) => {
                            let y_old = y;
                            y += (strength * rp - y) * relax;
                            0.5 * (y_old + y)
                        }
                    };
                    v += h * force + kick_scale * inc;
                    (x, v) = (h00 * x + h01 * v, h10 * x + h11 * v);
                }
            }
        }
        if !(x.is_finite() && x.abs() <= x_limit) {
            return Err(Error::Divergence {
                time: (block + 1) as f64 * cfg.dt,
                x: x.abs(),
            });
        }
    }
    Ok(traj)
}
