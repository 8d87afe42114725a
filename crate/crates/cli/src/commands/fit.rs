//! Multi-line Fano fit of a measured squared response.
//!
//! The data file is CSV with a header row and two numeric columns: test
//! frequency in Hz and the squared response `|B_meas / B_y|²`.

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};

use floquet_core::fano::{fano_width, fit_multiline, initial_guess, FanoFitResult};
use floquet_core::output::{to_json, write_csv};

use super::profile::profile_comb;
use crate::config::Config;
use crate::run::RunDir;
use crate::Status;

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV of `nu_hz,response2` with a header row
    pub data: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub result: FanoFitResult,
    /// `q_k = −η_{k,0}` per line.
    pub fano_q: Vec<f64>,
    /// `Γ = 1/(π T2n)`, Hz.
    pub width_hz: f64,
}

/// Read `(ν, value)` pairs; errors carry the 1-based line number.
pub fn read_data(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("{}:{line}: {e}", path.display())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            bail!("{}:{line}: expected 2 columns, got {}", path.display(), record.len());
        }
        let field = |i: usize| -> Result<f64> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| anyhow!("{}:{line}: `{}` is not a number", path.display(), &record[i]))?;
            if !v.is_finite() {
                bail!("{}:{line}: value must be finite", path.display());
            }
            Ok(v)
        };
        out.push((field(0)?, field(1)?));
    }
    if out.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(out)
}

pub fn compute(config: &Config, data: &[(f64, f64)]) -> Result<FitReport> {
    let lo = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let comb: Vec<(i64, f64)> = profile_comb(config)
        .lines
        .iter()
        .filter(|l| l.frequency >= lo && l.frequency <= hi)
        .map(|l| (l.k, l.frequency))
        .collect();
    if comb.is_empty() {
        bail!("data span [{lo}, {hi}] Hz contains no comb line of the configured drive");
    }
    let init = initial_guess(data, &comb)?;
    let result = fit_multiline(data, &init, &config.fit.options())?;
    Ok(FitReport { fano_q: result.fano_parameters(), width_hz: fano_width(result.t2n), result })
}

pub fn run(config: &Config, args: &FitArgs, dir: &mut RunDir) -> Result<Status> {
    let data = read_data(&args.data)?;
    let report = compute(config, &data)?;
    dir.write_str("fit.json", &to_json(&report)?)?;
    dir.write("fit_curve.csv", |w| {
        let rows = data.iter().map(|&(nu, y)| vec![nu, y, report.result.evaluate(nu)]);
        Ok(write_csv(w, &["nu_hz", "data", "model"], rows)?)
    })?;
    if report.result.converged {
        Ok(Status::Ok)
    } else {
        log::error!("fit did not converge after {} iterations", report.result.iterations);
        Ok(Status::NotConverged)
    }
}
