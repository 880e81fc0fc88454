use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::spectrum::{Provenance, SpectrumSeries};

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate of the single-sided PSD of `samples` in units²/(rad/s),
/// normalised so that ∫₀^{π/Δt} S dω equals the signal variance. Each
/// segment is mean-subtracted and Hann-windowed.
pub fn welch_psd_samples(
    samples: &[f64],
    sample_dt: f64,
    segment_length: usize,
    overlap_fraction: f64,
) -> Result<SpectrumSeries> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::invalid(
            "overlap_fraction",
            format!("must be in [0, 1), got {overlap_fraction}"),
        ));
    }
    if segment_length < 32 {
        return Err(Error::invalid(
            "segment_length",
            format!("must be >= 32, got {segment_length}"),
        ));
    }
    if !(sample_dt.is_finite() && sample_dt > 0.0) {
        return Err(Error::invalid(
            "sample_dt",
            format!("must be > 0, got {sample_dt}"),
        ));
    }
    let hop = ((segment_length as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let segments = if samples.len() >= segment_length {
        (samples.len() - segment_length) / hop + 1
    } else {
        0
    };
    if segments < 4 {
        return Err(Error::TooShort {
            samples: samples.len(),
            segment: segment_length,
        });
    }

    let window = hann(segment_length);
    let power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_length);
    let bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_length];
    for s in 0..segments {
        let seg = &samples[s * hop..s * hop + segment_length];
        let mean = seg.iter().sum::<f64>() / segment_length as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }

    let fs = 1.0 / sample_dt;
    let norm = 1.0 / (segments as f64 * fs * power * 2.0 * PI);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (segment_length.is_multiple_of(2) && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            one_sided * a * norm
        })
        .collect();
    let d_omega = 2.0 * PI * fs / segment_length as f64;
    let omega = (0..bins).map(|k| k as f64 * d_omega).collect();
    Ok(SpectrumSeries::new(omega, psd, Provenance::Langevin)?
        .with_meta("segment_length", segment_length as f64)
        .with_meta("segments", segments as f64)
        .with_meta("overlap_fraction", overlap_fraction)
        .with_meta("sample_dt_s", sample_dt))
}

/// Welch PSD of the trajectory's displacement.
pub fn welch_psd(
    traj: &Trajectory,
    segment_length: usize,
    overlap_fraction: f64,
) -> Result<SpectrumSeries> {
    welch_psd_samples(&traj.x, traj.sample_dt, segment_length, overlap_fraction)
}
