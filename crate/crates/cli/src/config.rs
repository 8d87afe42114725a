//! Run configuration: a TOML file with `[spin]`, `[drive]`, `[test]`,
//! `[optics]`, `[sim]`, `[analysis]` and `[fit]` sections, overlaid by
//! `--set section.key=value` flags.
//!
//! Precedence is flags > file > defaults. Every section and key is optional.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use floquet_core::bloch_sim::SimConfig;
use floquet_core::domain::{validate, validate_optics, ValidationReport};
use floquet_core::fano::{lm, FitOptions};
use floquet_core::steady_state::ResponseModel;
use floquet_core::{DriveConfig, OpticsParams, SpinParams, TestField};

/// Drive as written in a file: either fields (`b0`, `b_ac`) or frequencies
/// (`nu0`, `u`), not both for the same quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub b0: Option<f64>,
    pub b_ac: Option<f64>,
    pub nu_ac: f64,
    /// Larmor frequency, Hz.
    pub nu0: Option<f64>,
    /// Modulation index.
    pub u: Option<f64>,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection { b0: None, b_ac: None, nu_ac: 1.5, nu0: None, u: None }
    }
}

const DEFAULT_NU0: f64 = 10.039;
const DEFAULT_U: f64 = 3.12;

impl DriveSection {
    fn resolve(&self, gamma_n: f64) -> Result<DriveConfig> {
        let b0 = match (self.b0, self.nu0) {
            (Some(_), Some(_)) => bail!("drive.nu0: conflicts with drive.b0, give only one"),
            (Some(b0), None) => b0,
            (None, nu0) => nu0.unwrap_or(DEFAULT_NU0) / gamma_n,
        };
        let b_ac = match (self.b_ac, self.u) {
            (Some(_), Some(_)) => bail!("drive.u: conflicts with drive.b_ac, give only one"),
            (Some(b_ac), None) => b_ac,
            (None, u) => u.unwrap_or(DEFAULT_U) * self.nu_ac / gamma_n,
        };
        Ok(DriveConfig { b0, b_ac, nu_ac: self.nu_ac })
    }
}

/// Spectral analysis of simulated records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Sidebands `ν + l ν_ac` reported for `|l| ≤ l_max`.
    pub l_max: i64,
    /// Peak search half-width, Hz. Defaults to two bins.
    pub tolerance_hz: Option<f64>,
    /// Comb lines `ν0 + k ν_ac` used by `profile` and `fit`, `|k| ≤ k_max`.
    /// Defaults to `round(u)`.
    pub k_max: Option<i64>,
    pub model: ResponseModel,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection { l_max: 3, tolerance_hz: None, k_max: None, model: ResponseModel::Full }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub fit_offset: bool,
    pub max_iterations: usize,
    pub min_points_per_line: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::default();
        FitSection {
            fit_offset: d.fit_offset,
            max_iterations: d.lm.max_iterations,
            min_points_per_line: d.min_points_per_line,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            fit_offset: self.fit_offset,
            lm: lm::Options { max_iterations: self.max_iterations, ..lm::Options::default() },
            min_points_per_line: self.min_points_per_line,
        }
    }
}

/// The file layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    /// Recalibrate `spin.m_n` so that `|η_{0,0}(0)|` equals this value.
    pub baseline_gain: Option<f64>,
    pub spin: SpinParams,
    pub drive: DriveSection,
    pub test: TestField,
    pub optics: OpticsParams,
    pub sim: SimConfig,
    pub analysis: AnalysisSection,
    pub fit: FitSection,
}

/// Fully resolved parameters, as recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub spin: SpinParams,
    pub drive: DriveConfig,
    pub test: TestField,
    pub optics: OpticsParams,
    pub sim: SimConfig,
    pub analysis: AnalysisSection,
    pub fit: FitSection,
    /// Derived, for reference only.
    pub derived: Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    pub nu0: f64,
    pub u: f64,
    pub baseline_gain: f64,
    pub linewidth: f64,
}

impl Default for Config {
    fn default() -> Self {
        ConfigFile::default().resolve().expect("defaults are valid")
    }
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<Config> {
        let mut spin = self.spin;
        if let Some(g) = self.baseline_gain {
            if !(g.is_finite() && g > 0.0) {
                bail!("baseline_gain: must be positive, got {g}");
            }
            spin = spin.with_baseline_gain(g);
        }
        let drive = self.drive.resolve(spin.gamma_n)?;
        let mut report = validate(&spin, &drive, &self.test);
        report.merge(validate_optics(&self.optics));
        check_report(&report)?;
        if self.analysis.l_max < 0 {
            bail!("analysis.l_max: must be non-negative, got {}", self.analysis.l_max);
        }
        if let Some(k) = self.analysis.k_max {
            if k < 0 {
                bail!("analysis.k_max: must be non-negative, got {k}");
            }
        }
        if let Some(tol) = self.analysis.tolerance_hz {
            if !(tol.is_finite() && tol > 0.0) {
                bail!("analysis.tolerance_hz: must be positive, got {tol}");
            }
        }
        if self.sim.decimation == 0 {
            bail!("sim.decimation: must be at least 1");
        }
        if !(self.sim.duration.is_finite() && self.sim.duration > 0.0) {
            bail!("sim.duration: must be positive, got {}", self.sim.duration);
        }
        if !(self.sim.transient_skip >= 0.0 && self.sim.transient_skip < self.sim.duration) {
            bail!(
                "sim.transient_skip: must lie in [0, sim.duration = {}), got {}",
                self.sim.duration,
                self.sim.transient_skip
            );
        }
        Ok(Config {
            spin,
            drive,
            test: self.test,
            optics: self.optics,
            sim: self.sim,
            analysis: self.analysis,
            fit: self.fit,
            derived: Derived {
                nu0: drive.larmor(spin.gamma_n),
                u: drive.modulation_index(spin.gamma_n),
                baseline_gain: spin.baseline_gain(),
                linewidth: floquet_core::steady_state::fwhm(&spin),
            },
        })
    }
}

fn check_report(report: &ValidationReport) -> Result<()> {
    for w in report.warnings() {
        log::warn!("{}: {}", w.field, w.message);
    }
    if let Some(e) = report.errors().next() {
        let n = report.errors().count();
        let more = if n > 1 { format!(" (and {} more)", n - 1) } else { String::new() };
        bail!("{}: {}{more}", e.field, e.message);
    }
    Ok(())
}

impl Config {
    /// Comb orders `|k| ≤ k_max`; `round(u)` unless configured.
    pub fn k_max(&self) -> i64 {
        self.analysis.k_max.unwrap_or(self.derived.u.round() as i64)
    }
}

/// Parse `section.key=value`; the value is read as a TOML literal and falls
/// back to a bare string.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("--set {spec}: expected key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        bail!("--set {spec}: empty key segment");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| anyhow!("--set {}: `{p}` is not a section", path.join(".")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Read `file` (if any), apply `overrides` and resolve.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut table, &path, value)?;
    }
    let file: ConfigFile =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| anyhow!("config: {}", e.message()))?;
    file.resolve()
}
