//! Radiation-pressure backaction cooling of a micromechanical mirror in a
//! detuned Fabry-Pérot cavity.
//!
//! The crate is organised along the analysis chain:
//!
//! * [`cavity`] and [`backaction`]: the physical model of the cavity/mirror
//!   system and the radiation-pressure and photothermal self-energies.
//! * [`spectrum`] and [`thermo`]: displacement spectra, area thermometry,
//!   occupancy, detuning/power sweeps and the heating diagnostic.
//! * [`langevin`]: a time-domain stochastic simulation of the coupled
//!   field/mirror dynamics used as an independent oracle, plus a Welch PSD
//!   estimator.
//! * [`pdh`]: the Pound-Drever-Hall readout chain and its reference-tone
//!   calibration.
//! * [`fit`]: Levenberg-Marquardt machinery, per-spectrum fits and global
//!   detuning-curve fits.
//! * [`io`]: CSV/JSON/binary persistence of the above.

pub mod backaction;
pub mod cavity;
pub mod constants;
pub mod error;
pub mod fit;
pub mod io;
pub mod langevin;
pub mod pdh;
pub mod spectrum;
pub mod thermo;

pub use backaction::{
    effective_dynamics, gamma_opt, optical_spring_shift, pt_self_energy, rp_self_energy,
    BackactionKind, EffectiveDynamics, PhotothermalParams,
};
pub use cavity::{CavityGeometry, MechanicalMode, OperatingPoint, OpticalCavity};
pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use spectrum::{Provenance, SpectrumSeries};
