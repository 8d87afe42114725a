//! Bloch-equation run followed by spectral analysis of the effective field.

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use floquet_core::bloch_sim::{simulate, spectral_window, TimeSeries, MIN_PERIODS, WINDOW_PHASE_TOLERANCE};
use floquet_core::floquet::{CombLine, ResonanceComb};
use floquet_core::output::{to_json, write_csv};
use floquet_core::specfun::default_truncation;
use floquet_core::spectrum::{amplitude_spectra, measure_amplification, sideband_peaks, Spectrum};
use floquet_core::steady_state::{real_tone, sideband_phasors};

use crate::config::Config;
use crate::run::RunDir;
use crate::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeriesFormat {
    Binary,
    Csv,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Time-series output format
    #[arg(long, value_enum, default_value_t = SeriesFormat::Binary)]
    pub series: SeriesFormat,
}

/// One observed sideband of the test tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SidebandRow {
    pub l: i64,
    pub line_hz: f64,
    pub nu_hz: f64,
    /// Effective-field amplitude, nT.
    pub amplitude: f64,
    pub eta: f64,
    /// Closed-form prediction of `eta`.
    pub eta_theory: f64,
}

/// Peak record of the JSON output; `k` indexes the analysed comb, which here
/// is the sideband order `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakRecord {
    pub k: i64,
    pub nu_hz: f64,
    pub amplitude: f64,
    pub eta: f64,
}

pub struct Analysis {
    pub series: TimeSeries,
    /// Samples after the transient that span whole periods of every sideband.
    pub window: TimeSeries,
    /// Worst departure of the window from whole periods, in periods.
    pub window_mismatch: f64,
    pub spectra: Vec<Spectrum>,
    pub tolerance: f64,
    pub sidebands: Vec<SidebandRow>,
}

pub const SPECTRUM_CHANNELS: [&str; 3] = ["by_test", "by_eff", "by_meas"];

/// Sidebands `ν + l ν_ac`, `|l| ≤ l_max`, at positive frequency.
pub fn sideband_comb(config: &Config) -> ResonanceComb {
    let (nu, nu_ac) = (config.test.nu, config.drive.nu_ac);
    let l_max = config.analysis.l_max;
    ResonanceComb {
        nu0: nu,
        nu_ac,
        lines: (-l_max..=l_max)
            .map(|l| CombLine { k: l, frequency: nu + l as f64 * nu_ac })
            .filter(|l| l.frequency > 0.0)
            .collect(),
        dropped: vec![],
    }
}

fn analysis_window(series: &TimeSeries, config: &Config) -> (TimeSeries, f64) {
    let settled = series.after(config.sim.transient_skip);
    let available = settled.len() as f64 * settled.dt;
    let mut freqs = sideband_comb(config).frequencies();
    freqs.push(config.drive.nu_ac);
    let min_span = (MIN_PERIODS / config.drive.nu_ac).min(0.5 * available);
    match spectral_window(&freqs, settled.dt, min_span, available) {
        Some((n, mismatch)) => {
            if mismatch > WINDOW_PHASE_TOLERANCE {
                log::warn!("no window after the transient holds whole periods of every sideband; worst mismatch {mismatch:.4} periods");
            }
            (settled.truncated(n), mismatch)
        }
        None => (settled, f64::NAN),
    }
}

/// Closed-form `|B_eff,y| / B_y` at `frequency`.
fn eta_theory(config: &Config, frequency: f64) -> f64 {
    let u = config.derived.u;
    let k = default_truncation(u);
    let phasors = sideband_phasors(u, config.test.nu, &config.spin, &config.drive, config.analysis.model, k, k);
    let scale = config.spin.coupling() * config.spin.m_n;
    real_tone(&phasors, frequency).py.amplitude() * scale
}

pub fn analyse(config: &Config) -> Result<Analysis> {
    let series = simulate(&config.spin, &config.drive, &config.test, &config.sim)?;
    let (window, window_mismatch) = analysis_window(&series, config);
    if window.len() < 2 {
        bail!("sim.transient_skip: leaves {} samples to analyse", window.len());
    }
    let spectra = amplitude_spectra(&window, &SPECTRUM_CHANNELS)?;
    let df = spectra[0].df;
    let comb = sideband_comb(config);
    let tolerance = config.analysis.tolerance_hz.unwrap_or_else(|| (2.0 * df).min(0.5 * config.drive.nu_ac).max(df));
    let (by_test, by_eff) = (&spectra[0], &spectra[1]);
    let sidebands = if config.test.b_y > 0.0 {
        measure_amplification(by_eff, by_test, &comb, tolerance)?
            .into_iter()
            .zip(&comb.lines)
            .filter_map(|(g, line)| {
                g.eta.map(|eta| SidebandRow {
                    l: g.k,
                    line_hz: line.frequency,
                    nu_hz: g.nu_hz,
                    amplitude: g.amplitude,
                    eta,
                    eta_theory: eta_theory(config, line.frequency),
                })
            })
            .collect()
    } else {
        let present = sideband_peaks(by_eff, &comb, tolerance, None)?.into_iter().filter(|p| p.present).count();
        if present > 0 {
            log::warn!("{present} lines above the floor without a test field");
        }
        Vec::new()
    };
    Ok(Analysis { series, window, window_mismatch, spectra, tolerance, sidebands })
}

pub fn run(config: &Config, args: &SimulateArgs, dir: &mut RunDir) -> Result<Status> {
    let a = analyse(config)?;
    match args.series {
        SeriesFormat::Binary => {
            dir.write("series.bin", |w| Ok(a.series.write_binary(w)?))?;
        }
        SeriesFormat::Csv => {
            dir.write("series.csv", |w| Ok(a.series.write_csv(w)?))?;
        }
        SeriesFormat::None => {}
    }
    dir.write("spectrum.csv", |w| {
        let n = a.spectra[0].bins.len();
        let rows = (0..n).map(|i| {
            let mut row = vec![a.spectra[0].bins[i].frequency];
            row.extend(a.spectra.iter().map(|s| s.bins[i].amplitude));
            row
        });
        let mut header = vec!["frequency_hz"];
        header.extend(SPECTRUM_CHANNELS);
        Ok(write_csv(w, &header, rows)?)
    })?;
    let records: Vec<PeakRecord> =
        a.sidebands.iter().map(|r| PeakRecord { k: r.l, nu_hz: r.nu_hz, amplitude: r.amplitude, eta: r.eta }).collect();
    dir.write_str("sidebands.json", &to_json(&records)?)?;
    dir.write("sidebands.csv", |w| {
        let rows = a.sidebands.iter().map(|r| vec![r.l as f64, r.line_hz, r.nu_hz, r.amplitude, r.eta, r.eta_theory]);
        Ok(write_csv(w, &["l", "line_hz", "nu_hz", "amplitude_nt", "eta", "eta_theory"], rows)?)
    })?;
    log::info!(
        "{} samples, analysis window {:.4} s (mismatch {:.2e} periods), df {:.5} Hz, {} sidebands",
        a.series.len(),
        a.window.len() as f64 * a.window.dt,
        a.window_mismatch,
        a.spectra[0].df,
        a.sidebands.len()
    );
    Ok(Status::Ok)
}
