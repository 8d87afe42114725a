//! Single-sided amplitude spectra, peak extraction on the resonance comb and
//! measured amplification against a reference recording.
//!
//! Normalisation: with `X_i` the DFT of `N` samples, bin `0` holds `|X_0|/N`,
//! interior bins hold `2|X_i|/N` and, for even `N`, the Nyquist bin holds
//! `|X_{N/2}|/N`. A unit cosine with a whole number of periods in the window
//! therefore reads 1 in its bin.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bloch_sim::TimeSeries;
use crate::error::{Error, Result};
use crate::floquet::ResonanceComb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub frequency: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub df: f64,
    pub bins: Vec<Bin>,
    /// Length of the transformed record.
    pub n_samples: usize,
}

impl Spectrum {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.amplitude).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.frequency).collect()
    }

    /// `Σ w_i a_i²` with `w = 1` for the DC and Nyquist bins and `½` otherwise;
    /// equals the mean square of the transformed samples.
    pub fn mean_square(&self) -> f64 {
        let last = self.bins.len() - 1;
        let nyquist = self.n_samples.is_multiple_of(2);
        self.bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let w = if i == 0 || (nyquist && i == last) { 1.0 } else { 0.5 };
                w * b.amplitude * b.amplitude
            })
            .sum()
    }

    /// Median bin amplitude.
    pub fn median(&self) -> f64 {
        let mut a = self.amplitudes();
        a.sort_by(f64::total_cmp);
        let n = a.len();
        if n % 2 == 1 {
            a[n / 2]
        } else {
            0.5 * (a[n / 2 - 1] + a[n / 2])
        }
    }

    pub fn scaled(&self, c: f64) -> Spectrum {
        Spectrum {
            df: self.df,
            bins: self.bins.iter().map(|b| Bin { frequency: b.frequency, amplitude: b.amplitude * c.abs() }).collect(),
            n_samples: self.n_samples,
        }
    }

    /// Largest bin in `[lo, hi]`.
    fn max_in(&self, lo: f64, hi: f64) -> Option<Bin> {
        self.bins.iter().filter(|b| b.frequency >= lo && b.frequency <= hi).copied().fold(
            None,
            |best: Option<Bin>, b| match best {
                Some(x) if x.amplitude >= b.amplitude => Some(x),
                _ => Some(b),
            },
        )
    }
}

/// Spectrum of a uniformly sampled record.
pub fn spectrum_of(samples: &[f64], dt: f64) -> Result<Spectrum> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("a spectrum needs at least 2 samples, got {n}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("sample spacing must be positive, got {dt}")));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    let half = n / 2;
    let bins = (0..=half)
        .map(|i| {
            let edge = i == 0 || (n.is_multiple_of(2) && i == half);
            let scale = if edge { 1.0 } else { 2.0 } / n as f64;
            Bin { frequency: i as f64 * df, amplitude: buf[i].norm() * scale }
        })
        .collect();
    Ok(Spectrum { df, bins, n_samples: n })
}

/// Spectrum of one channel of a time series.
pub fn amplitude_spectrum(series: &TimeSeries, channel: &str) -> Result<Spectrum> {
    spectrum_of(series.channel(channel)?, series.dt)
}

/// Spectrum of `(t, value)` pairs; the times must be uniformly spaced.
pub fn amplitude_spectrum_of_samples(times: &[f64], values: &[f64]) -> Result<Spectrum> {
    if times.len() != values.len() {
        return Err(Error::ChannelLength { name: "values".into(), got: values.len(), expected: times.len() });
    }
    if times.len() < 2 {
        return Err(Error::InvalidConfig("a spectrum needs at least 2 samples".into()));
    }
    let dt = times[1] - times[0];
    let span = times[times.len() - 1] - times[0];
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(span.abs() * 1e-6) {
            return Err(Error::NonUniformSampling { index: i + 1 });
        }
    }
    spectrum_of(values, dt)
}

/// Spectra of several channels, computed in parallel, in the order given.
pub fn amplitude_spectra(series: &TimeSeries, channels: &[&str]) -> Result<Vec<Spectrum>> {
    channels.par_iter().map(|c| amplitude_spectrum(series, c)).collect()
}

/// Multiple of the median bin amplitude used as the default noise floor.
pub const NOISE_FLOOR_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub k: i64,
    /// Comb line, Hz.
    pub line_hz: f64,
    /// Frequency of the selected bin, Hz.
    pub nu_hz: f64,
    pub amplitude: f64,
    pub present: bool,
}

fn check_tolerance(spec: &Spectrum, comb: &ResonanceComb, tol: f64) -> Result<()> {
    if tol < spec.df {
        return Err(Error::ToleranceBelowBinWidth { tol, df: spec.df });
    }
    if comb.lines.len() > 1 && comb.nu_ac < 2.0 * tol {
        return Err(Error::OverlappingWindows { spacing: comb.nu_ac, tol });
    }
    Ok(())
}

/// Largest bin within `±tol` of each comb line. Lines whose best bin does
/// not exceed `floor` (default: 5 × median amplitude) are marked absent.
pub fn sideband_peaks(spec: &Spectrum, comb: &ResonanceComb, tol: f64, floor: Option<f64>) -> Result<Vec<Peak>> {
    check_tolerance(spec, comb, tol)?;
    let floor = floor.unwrap_or_else(|| NOISE_FLOOR_FACTOR * spec.median());
    Ok(comb
        .lines
        .iter()
        .map(|line| match spec.max_in(line.frequency - tol, line.frequency + tol) {
            Some(b) if b.amplitude > floor => {
                Peak { k: line.k, line_hz: line.frequency, nu_hz: b.frequency, amplitude: b.amplitude, present: true }
            }
            Some(b) => Peak { k: line.k, line_hz: line.frequency, nu_hz: b.frequency, amplitude: 0.0, present: false },
            None => Peak { k: line.k, line_hz: line.frequency, nu_hz: line.frequency, amplitude: 0.0, present: false },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredGain {
    pub k: i64,
    pub nu_hz: f64,
    pub amplitude: f64,
    /// `None` when the line is absent.
    pub eta: Option<f64>,
}

/// Gain per comb line: line amplitude in `signal` over the test-tone
/// amplitude in `reference`. The reference tone is the largest bin of the
/// reference recording and must exceed 5 × its median bin.
pub fn measure_amplification(
    signal: &Spectrum,
    reference: &Spectrum,
    comb: &ResonanceComb,
    tol: f64,
) -> Result<Vec<MeasuredGain>> {
    let tone = reference.bins.iter().map(|b| b.amplitude).fold(0.0, f64::max);
    let threshold = NOISE_FLOOR_FACTOR * reference.median();
    if !(tone > threshold) {
        return Err(Error::ReferenceBelowThreshold { amplitude: tone, threshold });
    }
    Ok(sideband_peaks(signal, comb, tol, None)?
        .into_iter()
        .map(|p| MeasuredGain {
            k: p.k,
            nu_hz: p.nu_hz,
            amplitude: p.amplitude,
            eta: p.present.then(|| p.amplitude / tone),
        })
        .collect())
}
