//! Persistence: spectra and sweep tables as CSV (with JSON sidecars for
//! metadata), fit reports as JSON, and Langevin trajectories in a compact
//! binary record.
//!
//! Floats are written with shortest round-trip formatting, so reading a
//! file back reproduces the values bit for bit.
//!
//! # Trajectory record layout
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `OMTRAJ01` |
//! | 4 | header length `h`, u32 little-endian |
//! | h | UTF-8 JSON header `{params, t0_s, sample_dt_s}` |
//! | 8 | sample count `n`, u64 little-endian |
//! | 5·8·n | columns t, x, v, field_re, field_im, each `n` little-endian f64 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backaction::EffectiveDynamics;
use crate::error::{Error, Result};
use crate::fit::{DetuningDataset, DetuningRow, FitResult};
use crate::langevin::{Trajectory, TrajectoryParams};
use crate::pdh::{PdhConfig, RawSpectrum};
use crate::spectrum::{Provenance, SpectrumSeries};
use crate::thermo::{SweepRow, ThermoResult};

pub const DISPLACEMENT_PSD_UNITS: &str = "m^2/(rad/s)";
pub const DETECTOR_PSD_UNITS: &str = "detector^2/(rad/s)";
pub const SWEEP_COLUMNS: [&str; 7] = [
    "power_W",
    "detuning_rad_s",
    "omega_eff_rad_s",
    "gamma_eff_rad_s",
    "T_eff_K",
    "n_mean",
    "stable",
];
pub const DETUNING_COLUMNS: [&str; 5] = [
    "detuning_rad_s",
    "power_W",
    "omega_eff_rad_s",
    "gamma_eff_rad_s",
    "weight",
];
const TRAJECTORY_MAGIC: &[u8; 8] = b"OMTRAJ01";

/// Metadata file stored next to a spectrum CSV: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(format!("cannot open {}", path.display()), e))
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        context: path.display().to_string(),
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let at = e
        .position()
        .map(|p| format!(" (line {})", p.line()))
        .unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
        kind => parse_error(path, format!("{kind:?}{at}")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| parse_error(path, e.to_string()))
}

/// Column-checked CSV table: headers are matched by name, and each cell
/// error reports its line and column.
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(open(path)?);
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let records = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            headers,
            records,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            parse_error(
                &self.path,
                format!("missing column '{name}' (found {:?})", self.headers),
            )
        })
    }

    fn cell_error(&self, row: usize, name: &str, message: String) -> Error {
        let line = self.records[row]
            .position()
            .map(|p| p.line())
            .unwrap_or(row as u64 + 2);
        parse_error(
            &self.path,
            format!("line {line}, column '{name}': {message}"),
        )
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.records[row].get(col).unwrap_or("")
    }

    fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let s = self.text(row, col);
        s.parse::<f64>().map_err(|_| {
            self.cell_error(
                row,
                &self.headers[col],
                format!("cannot parse '{s}' as a number"),
            )
        })
    }

    fn optional_f64(&self, row: usize, col: usize) -> Result<Option<f64>> {
        if self.text(row, col).is_empty() {
            Ok(None)
        } else {
            self.f64(row, col).map(Some)
        }
    }

    fn bool(&self, row: usize, col: usize) -> Result<bool> {
        match self.text(row, col) {
            "true" => Ok(true),
            "false" => Ok(false),
            s => Err(self.cell_error(
                row,
                &self.headers[col],
                format!("expected true/false, got '{s}'"),
            )),
        }
    }
}

fn write_psd_csv(path: &Path, omega: &[f64], psd: &[f64], units: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["omega_rad_s", "psd", "units"])
        .map_err(|e| csv_error(path, e))?;
    for (o, p) in omega.iter().zip(psd) {
        w.write_record([o.to_string(), p.to_string(), units.to_owned()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_psd_csv(path: &Path, units: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = Table::read(path)?;
    let (c_omega, c_psd) = (table.column("omega_rad_s")?, table.column("psd")?);
    let c_units = table.headers.iter().position(|h| h == "units");
    let mut omega = Vec::with_capacity(table.records.len());
    let mut psd = Vec::with_capacity(table.records.len());
    for row in 0..table.records.len() {
        omega.push(table.f64(row, c_omega)?);
        psd.push(table.f64(row, c_psd)?);
        if let Some(c) = c_units {
            let u = table.text(row, c);
            if u != units {
                return Err(table.cell_error(
                    row,
                    "units",
                    format!("expected '{units}', got '{u}'"),
                ));
            }
        }
    }
    Ok((omega, psd))
}

#[derive(Serialize, Deserialize)]
struct SpectrumSidecar {
    provenance: Provenance,
    #[serde(default)]
    meta: std::collections::BTreeMap<String, f64>,
}

/// Writes `omega_rad_s,psd,units` rows and the provenance/metadata sidecar.
pub fn write_spectrum_csv(path: &Path, s: &SpectrumSeries) -> Result<()> {
    write_psd_csv(path, s.omega(), s.psd(), DISPLACEMENT_PSD_UNITS)?;
    write_json(
        &sidecar_path(path),
        &SpectrumSidecar {
            provenance: s.provenance(),
            meta: s.meta().clone(),
        },
    )
}

/// Reads a displacement spectrum. Without a sidecar the provenance is
/// `external`.
pub fn read_spectrum_csv(path: &Path) -> Result<SpectrumSeries> {
    let (omega, psd) = read_psd_csv(path, DISPLACEMENT_PSD_UNITS)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        read_json(&side)?
    } else {
        SpectrumSidecar {
            provenance: Provenance::External,
            meta: Default::default(),
        }
    };
    let mut s = SpectrumSeries::new(omega, psd, sidecar.provenance)?;
    for (k, v) in sidecar.meta {
        s = s.with_meta(&k, v);
    }
    Ok(s)
}

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    #[serde(rename = "detuning_rad_s")]
    detuning: f64,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pdh: Option<PdhConfig>,
}

/// Writes a raw detector spectrum; the sidecar holds the acquisition
/// detuning and, if given, the readout configuration.
pub fn write_raw_spectrum_csv(
    path: &Path,
    raw: &RawSpectrum,
    pdh: Option<&PdhConfig>,
) -> Result<()> {
    write_psd_csv(path, raw.omega(), raw.psd(), DETECTOR_PSD_UNITS)?;
    write_json(
        &sidecar_path(path),
        &RawSidecar {
            detuning: raw.detuning(),
            provenance: raw.provenance(),
            pdh: pdh.copied(),
        },
    )
}

/// Reads a raw spectrum; the sidecar is required for the detuning.
pub fn read_raw_spectrum_csv(path: &Path) -> Result<(RawSpectrum, Option<PdhConfig>)> {
    let (omega, psd) = read_psd_csv(path, DETECTOR_PSD_UNITS)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(parse_error(
            path,
            format!("missing acquisition sidecar {}", side.display()),
        ));
    }
    let sidecar: RawSidecar = read_json(&side)?;
    Ok((
        RawSpectrum::new(omega, psd, sidecar.detuning, sidecar.provenance)?,
        sidecar.pdh,
    ))
}

/// Sweep table with the fixed column order of [`SWEEP_COLUMNS`]; T_eff and
/// n_mean are empty for unstable rows.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let path = Path::new("sweep table");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.power.to_string(),
            r.detuning.to_string(),
            r.dynamics.omega_eff.to_string(),
            r.dynamics.gamma_eff.to_string(),
            opt(r.thermo.map(|t| t.t_eff)),
            opt(r.thermo.map(|t| t.n_mean)),
            r.dynamics.stable.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io("sweep table", e))
}

pub fn write_sweep_json<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

/// Reads a sweep table. ⟨x²⟩ is not part of the table and comes back NaN.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let table = Table::read(path)?;
    let cols = SWEEP_COLUMNS
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    (0..table.records.len())
        .map(|row| {
            let t_eff = table.optional_f64(row, cols[4])?;
            let n_mean = table.optional_f64(row, cols[5])?;
            let stable = table.bool(row, cols[6])?;
            let thermo = match (stable, t_eff, n_mean) {
                (true, Some(t_eff), Some(n_mean)) => Some(ThermoResult {
                    x2_mean: f64::NAN,
                    t_eff,
                    n_mean,
                }),
                (true, _, _) => {
                    return Err(table.cell_error(
                        row,
                        "T_eff_K",
                        "stable row without T_eff/n_mean".into(),
                    ))
                }
                (false, _, _) => None,
            };
            Ok(SweepRow {
                power: table.f64(row, cols[0])?,
                detuning: table.f64(row, cols[1])?,
                dynamics: EffectiveDynamics {
                    omega_eff: table.f64(row, cols[2])?,
                    gamma_eff: table.f64(row, cols[3])?,
                    stable,
                },
                thermo,
            })
        })
        .collect()
}

pub fn write_fit_json(path: &Path, fit: &FitResult) -> Result<()> {
    write_json(path, fit)
}

pub fn read_fit_json(path: &Path) -> Result<FitResult> {
    read_json(path)
}

pub fn write_detuning_csv(path: &Path, data: &DetuningDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(DETUNING_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    for r in data.rows() {
        w.write_record(
            [r.detuning, r.power, r.omega_eff, r.gamma_eff, r.weight].map(|v| v.to_string()),
        )
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a detuning dataset. The `weight` column is optional (default 1).
pub fn read_detuning_csv(path: &Path) -> Result<DetuningDataset> {
    let table = Table::read(path)?;
    let cols = DETUNING_COLUMNS[..4]
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let weight = table.headers.iter().position(|h| h == "weight");
    let rows = (0..table.records.len())
        .map(|row| {
            let v = |i: usize| table.f64(row, cols[i]);
            let weight = match weight {
                Some(c) => table.f64(row, c)?,
                None => 1.0,
            };
            if !(weight.is_finite() && weight > 0.0) {
                return Err(table.cell_error(row, "weight", format!("must be > 0, got {weight}")));
            }
            Ok(DetuningRow {
                detuning: v(0)?,
                power: v(1)?,
                omega_eff: v(2)?,
                gamma_eff: v(3)?,
                weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DetuningDataset::new(rows).map_err(|e| parse_error(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    params: TrajectoryParams,
    #[serde(rename = "t0_s")]
    t0: f64,
    #[serde(rename = "sample_dt_s")]
    sample_dt: f64,
}

/// Binary trajectory record (layout in the module docs).
pub fn write_trajectory<W: Write>(mut out: W, traj: &Trajectory) -> Result<()> {
    let header = serde_json::to_vec(&TrajectoryHeader {
        params: traj.params,
        t0: traj.t0,
        sample_dt: traj.sample_dt,
    })?;
    let io = |e| Error::io("writing trajectory", e);
    out.write_all(TRAJECTORY_MAGIC).map_err(io)?;
    out.write_all(&(header.len() as u32).to_le_bytes())
        .map_err(io)?;
    out.write_all(&header).map_err(io)?;
    out.write_all(&(traj.len() as u64).to_le_bytes())
        .map_err(io)?;
    let times = traj.times();
    for col in [&times, &traj.x, &traj.v, &traj.field_re, &traj.field_im] {
        for v in col.iter() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_trajectory<R: Read>(mut input: R) -> Result<Trajectory> {
    let io = |e| Error::io("reading trajectory", e);
    let bad = |m: &str| Error::Parse {
        context: "trajectory record".into(),
        message: m.into(),
    };
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != TRAJECTORY_MAGIC {
        return Err(bad("not a trajectory record (bad magic)"));
    }
    let mut len4 = [0u8; 4];
    input.read_exact(&mut len4).map_err(io)?;
    let mut header = vec![0u8; u32::from_le_bytes(len4) as usize];
    input.read_exact(&mut header).map_err(io)?;
    let header: TrajectoryHeader =
        serde_json::from_slice(&header).map_err(|e| bad(&format!("header: {e}")))?;
    let mut len8 = [0u8; 8];
    input.read_exact(&mut len8).map_err(io)?;
    let n = usize::try_from(u64::from_le_bytes(len8)).map_err(|_| bad("sample count overflows"))?;
    let mut column = || -> Result<Vec<f64>> {
        let mut bytes = vec![
            0u8;
            n.checked_mul(8)
                .ok_or_else(|| bad("sample count overflows"))?
        ];
        input.read_exact(&mut bytes).map_err(io)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect())
    };
    let _t = column()?;
    let (x, v, field_re, field_im) = (column()?, column()?, column()?, column()?);
    Ok(Trajectory {
        params: header.params,
        t0: header.t0,
        sample_dt: header.sample_dt,
        x,
        v,
        field_re,
        field_im,
    })
}

/// CSV export keeping every `stride`-th sample.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid("stride", "must be >= 1"));
    }
    let path = Path::new("trajectory csv");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "x_m", "v_m_s", "field_re", "field_im"])
        .map_err(|e| csv_error(path, e))?;
    for i in (0..traj.len()).step_by(stride) {
        w.write_record(
            [
                traj.time(i),
                traj.x[i],
                traj.v[i],
                traj.field_re[i],
                traj.field_im[i],
            ]
            .map(|v| v.to_string()),
        )
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io("trajectory csv", e))
}
