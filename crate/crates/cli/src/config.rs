//! Scenario configuration: JSON documents describing one experimental
//! regime. Every physical invariant is checked while parsing, so errors
//! carry the line and column of the offending value.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use optomech::langevin::{FieldModel, SimConfig};
use optomech::pdh::PdhConfig;
use optomech::{BackactionKind, MechanicalMode, OperatingPoint, OpticalCavity};
use serde::{Deserialize, Serialize};

pub const CONFIG_DIR_ENV: &str = "OPTOMECH_CONFIG_DIR";

/// Configurations shipped inside the binary.
pub const BUNDLED: [(&str, &str); 2] = [
    ("cryo35K", include_str!("../configs/cryo35K.json")),
    ("room295K", include_str!("../configs/room295K.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DetuningUnit {
    RadS,
    OmegaM,
    Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawGrid")]
pub enum DetuningGrid {
    /// Explicit values in rad/s.
    List(NonEmpty),
    /// `points` evenly spaced values from `start` to `stop` inclusive.
    Range {
        start: f64,
        stop: f64,
        points: usize,
        unit: DetuningUnit,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawGrid {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
        unit: DetuningUnit,
    },
}

impl TryFrom<RawGrid> for DetuningGrid {
    type Error = String;
    fn try_from(raw: RawGrid) -> std::result::Result<Self, String> {
        match raw {
            RawGrid::List(v) => NonEmpty::try_from(v)
                .map(DetuningGrid::List)
                .map_err(|e| format!("detunings: {e}")),
            RawGrid::Range {
                start,
                stop,
                points,
                unit,
            } => {
                if points == 0 {
                    return Err("detunings: points must be >= 1".into());
                }
                if !(start.is_finite() && stop.is_finite()) {
                    return Err("detunings: start and stop must be finite".into());
                }
                Ok(DetuningGrid::Range {
                    start,
                    stop,
                    points,
                    unit,
                })
            }
        }
    }
}

/// A non-empty list of finite numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>")]
pub struct NonEmpty(Vec<f64>);

impl TryFrom<Vec<f64>> for NonEmpty {
    type Error = String;
    fn try_from(v: Vec<f64>) -> std::result::Result<Self, String> {
        if v.is_empty() {
            return Err("grid is empty".into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("grid values must be finite".into());
        }
        Ok(Self(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(rename = "duration_s", default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    #[serde(default)]
    pub field_model: FieldModel,
}

fn default_duration() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    1
}

fn default_substeps() -> u32 {
    1
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            duration: default_duration(),
            seed: default_seed(),
            substeps: default_substeps(),
            field_model: FieldModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub cavity: OpticalCavity,
    pub mechanics: MechanicalMode,
    #[serde(rename = "bath_temperature_K")]
    pub bath_temperature: f64,
    #[serde(rename = "powers_W")]
    pub powers: NonEmpty,
    pub detunings: DetuningGrid,
    #[serde(default)]
    pub backaction: BackactionKind,
    #[serde(default)]
    pub pdh: PdhConfig,
    #[serde(default)]
    pub sim: SimSettings,
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).with_context(|| format!("config {origin}"))?;
        cfg.validate().with_context(|| format!("config {origin}"))?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.bath_temperature.is_finite() && self.bath_temperature >= 0.0) {
            bail!(
                "bath_temperature_K must be >= 0, got {}",
                self.bath_temperature
            );
        }
        if let Some(p) = self.powers.0.iter().find(|p| **p < 0.0) {
            bail!("powers_W must be >= 0, found {p}");
        }
        if !(self.sim.duration.is_finite() && self.sim.duration > 0.0) {
            bail!("sim.duration_s must be > 0, got {}", self.sim.duration);
        }
        if self.sim.substeps == 0 {
            bail!("sim.substeps must be >= 1");
        }
        Ok(())
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers.0
    }

    pub fn detunings(&self) -> Vec<f64> {
        match &self.detunings {
            DetuningGrid::List(v) => v.0.clone(),
            DetuningGrid::Range {
                start,
                stop,
                points,
                unit,
            } => {
                let scale = match unit {
                    DetuningUnit::RadS => 1.0,
                    DetuningUnit::OmegaM => self.mechanics.omega_m(),
                    DetuningUnit::Kappa => self.cavity.linewidth(),
                };
                if *points == 1 {
                    return vec![start * scale];
                }
                (0..*points)
                    .map(|i| scale * (start + (stop - start) * i as f64 / (*points - 1) as f64))
                    .collect()
            }
        }
    }

    pub fn operating_point(&self, detuning: f64, power: f64) -> Result<OperatingPoint> {
        Ok(OperatingPoint::new(detuning, power, self.bath_temperature)?)
    }

    /// Langevin settings with the resolution-guarded step.
    pub fn sim_config(&self, seed: Option<u64>, duration: Option<f64>) -> SimConfig {
        SimConfig::guarded(
            &self.cavity,
            &self.mechanics,
            duration.unwrap_or(self.sim.duration),
            seed.unwrap_or(self.sim.seed),
        )
        .with_substeps(self.sim.substeps)
        .with_field_model(self.sim.field_model)
    }
}

/// Where a config argument was found.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Bundled(&'static str),
}

/// Resolves a config argument: an existing path, then `<dir>/<name>[.json]`
/// under `$OPTOMECH_CONFIG_DIR`, then a bundled name.
pub fn resolve(arg: &str, config_dir: Option<&Path>) -> Result<Source> {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return Ok(Source::File(direct));
    }
    if let Some(dir) = config_dir {
        for candidate in [dir.join(arg), dir.join(format!("{arg}.json"))] {
            if candidate.is_file() {
                return Ok(Source::File(candidate));
            }
        }
    }
    let stem = arg.strip_suffix(".json").unwrap_or(arg);
    if let Some((name, _)) = BUNDLED.iter().find(|(name, _)| *name == stem) {
        return Ok(Source::Bundled(name));
    }
    let names: Vec<&str> = BUNDLED.iter().map(|b| b.0).collect();
    bail!("config '{arg}' not found as a file, in ${CONFIG_DIR_ENV}, or among bundled configs {names:?}")
}

pub fn load(arg: &str, config_dir: Option<&Path>) -> Result<ScenarioConfig> {
    match resolve(arg, config_dir)? {
        Source::File(path) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            ScenarioConfig::parse(&text, &path.display().to_string())
        }
        Source::Bundled(name) => {
            let text = BUNDLED
                .iter()
                .find(|b| b.0 == name)
                .map(|b| b.1)
                .unwrap_or_default();
            ScenarioConfig::parse(text, &format!("bundled:{name}"))
        }
    }
}
