//! Amplification versus test-field frequency around every comb line.

use anyhow::{bail, Result};
use clap::Args;

use floquet_core::floquet::{resonance_comb, ResonanceComb};
use floquet_core::output::write_csv;
use floquet_core::steady_state::{amplification_on_resonance, comb_grid, profile_on_grid, ProfileKind, ResponseModel};

use crate::config::Config;
use crate::run::RunDir;
use crate::Status;

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    /// Grid step, Hz [default: linewidth/20]
    #[arg(long)]
    pub step: Option<f64>,
    /// Half-width of the window around each line, in linewidths
    #[arg(long, default_value_t = 10.0)]
    pub span: f64,
}

/// Comb lines `|k| ≤ k_max`; with the full model, lines at negative
/// frequency are included at `|ν0 + k ν_ac|`.
pub fn profile_comb(config: &Config) -> ResonanceComb {
    let k = config.k_max();
    let mut comb = resonance_comb(&config.spin, &config.drive, -k..=k);
    if config.analysis.model == ResponseModel::Full {
        comb.lines.extend(comb.folded().into_iter().filter(|l| l.frequency > 0.0));
        comb.lines.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    }
    comb
}

pub struct ProfileData {
    pub comb: ResonanceComb,
    pub grid: Vec<f64>,
    /// `|Σ_k J_k² η_{0,0}(0)/√(1+x_k²)|`.
    pub eta: Vec<f64>,
    /// Coherent `l = 0` gain.
    pub eta_coherent: Vec<f64>,
    /// Observed response including the unit direct term.
    pub with_direct: Vec<f64>,
}

pub fn compute(config: &Config, args: &ProfileArgs) -> Result<ProfileData> {
    let linewidth = config.derived.linewidth;
    let step = args.step.unwrap_or(linewidth / 20.0);
    if !(step.is_finite() && step > 0.0) {
        bail!("--step: must be positive, got {step}");
    }
    if !(args.span.is_finite() && args.span > 0.0) {
        bail!("--span: must be positive, got {}", args.span);
    }
    let comb = profile_comb(config);
    if comb.lines.is_empty() {
        bail!("analysis.k_max: no comb line lies at positive frequency");
    }
    let grid = comb_grid(&comb, linewidth, args.span, step);
    let u = config.derived.u;
    let (p, d) = (&config.spin, &config.drive);
    let eta = profile_on_grid(&grid, u, p, d, ProfileKind::Symmetric).eta;
    let eta_coherent = profile_on_grid(&grid, u, p, d, ProfileKind::Coherent).eta;
    let with_direct = profile_on_grid(&grid, u, p, d, ProfileKind::WithDirectTerm(config.analysis.model)).eta;
    Ok(ProfileData { comb, grid, eta, eta_coherent, with_direct })
}

pub fn run(config: &Config, args: &ProfileArgs, dir: &mut RunDir) -> Result<Status> {
    let data = compute(config, args)?;
    dir.write("profile.csv", |w| {
        let rows =
            (0..data.grid.len()).map(|i| vec![data.grid[i], data.eta[i], data.eta_coherent[i], data.with_direct[i]]);
        Ok(write_csv(w, &["nu_hz", "eta", "eta_coherent", "response_with_direct"], rows)?)
    })?;
    let u = config.derived.u;
    dir.write("lines.csv", |w| {
        let rows = data
            .comb
            .lines
            .iter()
            .map(|l| vec![l.k as f64, l.frequency, amplification_on_resonance(l.k, 0, u, &config.spin)]);
        Ok(write_csv(w, &["k", "nu_hz", "eta_k0"], rows)?)
    })?;
    log::info!("{} grid points around {} lines", data.grid.len(), data.comb.lines.len());
    Ok(Status::Ok)
}
