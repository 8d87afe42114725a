//! One-parameter sweeps of the closed-form gains and the observed response.
//!
//! For the `u` and `nu-ac` axes the `eta_k_l` columns are the on-resonance
//! gains `η_{k,l}`, i.e. a test field sitting on comb line `k`. For the `nu`
//! axis the test frequency is the swept value and each column is
//! `η_{k,l} / √(1 + x_k²)` with the detuning `x_k` from line `k`. The
//! `response` column is the observed response with the direct term at the
//! configured test frequency (or the swept one on the `nu` axis).

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use std::str::FromStr;

use floquet_core::output::write_csv;
use floquet_core::specfun::default_truncation;
use floquet_core::steady_state::{amplification_on_resonance, detuning, total_response};

use crate::config::Config;
use crate::run::RunDir;
use crate::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    U,
    Nu,
    NuAc,
}

impl Axis {
    fn column(self) -> &'static str {
        match self {
            Axis::U => "u",
            Axis::Nu => "nu_hz",
            Axis::NuAc => "nu_ac_hz",
        }
    }
}

/// Sideband pair `k,l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub k: i64,
    pub l: i64,
}

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (k, l) = s.split_once(',').ok_or_else(|| format!("expected k,l, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<i64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Pair { k: parse(k)?, l: parse(l)? })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, allow_hyphen_values = true)]
    pub from: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub to: f64,
    /// Number of points including both ends; 1 only for a degenerate range
    #[arg(long)]
    pub steps: usize,
    /// Gain columns as k,l (repeatable)
    #[arg(long = "pair", default_values = ["1,0"], allow_hyphen_values = true)]
    pub pairs: Vec<Pair>,
}

pub struct SweepTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn axis_values(args: &SweepArgs) -> Result<Vec<f64>> {
    if !(args.from.is_finite() && args.to.is_finite()) {
        bail!("--from/--to: must be finite");
    }
    match args.steps {
        0 => bail!("--steps: must be at least 1"),
        1 if args.from != args.to => bail!("--steps: a range with from != to needs at least 2 steps"),
        1 => Ok(vec![args.from]),
        n => {
            let h = (args.to - args.from) / (n - 1) as f64;
            Ok((0..n).map(|i| if i == n - 1 { args.to } else { args.from + i as f64 * h }).collect())
        }
    }
}

fn point(config: &Config, axis: Axis, value: f64, pairs: &[Pair]) -> Vec<f64> {
    let p = &config.spin;
    let mut drive = config.drive;
    let mut nu = config.test.nu;
    match axis {
        Axis::U => drive = drive.with_modulation_index(p.gamma_n, value),
        Axis::NuAc => {
            let u = config.derived.u;
            drive.nu_ac = value;
            drive = drive.with_modulation_index(p.gamma_n, u);
        }
        Axis::Nu => nu = value,
    }
    let u = drive.modulation_index(p.gamma_n);
    let mut row = vec![value];
    for pair in pairs {
        let eta = amplification_on_resonance(pair.k, pair.l, u, p);
        row.push(match axis {
            Axis::Nu => eta / (1.0 + detuning(pair.k, nu, p, &drive).powi(2)).sqrt(),
            _ => eta,
        });
    }
    let k = default_truncation(u);
    row.push(total_response(u, nu, p, &drive, config.analysis.model, k, k));
    row
}

pub fn compute(config: &Config, args: &SweepArgs) -> Result<SweepTable> {
    let values = axis_values(args)?;
    match args.axis {
        Axis::U if values.iter().any(|&u| u < 0.0) => bail!("--from/--to: u must be non-negative"),
        Axis::NuAc if values.iter().any(|&f| f <= 0.0) => bail!("--from/--to: nu_ac must be positive"),
        Axis::Nu if values.iter().any(|&f| f < 0.0) => bail!("--from/--to: nu must be non-negative"),
        _ => {}
    }
    let rows = values.par_iter().map(|&v| point(config, args.axis, v, &args.pairs)).collect();
    let mut header = vec![args.axis.column().to_owned()];
    header.extend(args.pairs.iter().map(|p| format!("eta_{}_{}", p.k, p.l)));
    header.push("response".into());
    Ok(SweepTable { header, rows })
}

pub fn run(config: &Config, args: &SweepArgs, dir: &mut RunDir) -> Result<Status> {
    let table = compute(config, args)?;
    let header: Vec<&str> = table.header.iter().map(String::as_str).collect();
    dir.write("sweep.csv", |w| Ok(write_csv(w, &header, table.rows.iter().cloned())?))?;
    Ok(Status::Ok)
}
