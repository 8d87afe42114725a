//! Dressed-state picture of the driven two-level spin: quasi-energies,
//! Floquet-state coefficients in the photon-number basis, multi-photon
//! transition amplitudes and the comb of resonance frequencies.

use log::warn;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;

use crate::domain::{DriveConfig, SpinParams};
use crate::specfun::JacobiAnger;

/// Spin branch `ε = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Up,
    Down,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Up => 1.0,
            Branch::Down => -1.0,
        }
    }
}

/// Quasi-energy `E_{ε,n}/2π = ε ν0/2 + n ν_ac`, in Hz.
pub fn floquet_energy(epsilon: Branch, n: i64, params: &SpinParams, drive: &DriveConfig) -> f64 {
    epsilon.sign() * drive.larmor(params.gamma_n) / 2.0 + n as f64 * drive.nu_ac
}

/// Floquet state `|ε⟩_n = Σ_{n'} J_{n−n'}(ε u/2) |ε, n'⟩`, truncated to
/// `|n − n'| ≤ k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetState {
    pub epsilon: Branch,
    pub n: i64,
    /// `(n − n', amplitude)` ordered by offset.
    pub coeffs: Vec<(i64, f64)>,
}

impl FloquetState {
    /// Amplitude on the photon-number state `|ε, n'⟩`.
    pub fn amplitude(&self, n_prime: i64) -> f64 {
        let offset = self.n - n_prime;
        self.coeffs.iter().find(|(o, _)| *o == offset).map_or(0.0, |&(_, a)| a)
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|(_, a)| a * a).sum()
    }
}

pub fn floquet_state_coefficients(
    epsilon: Branch,
    n: i64,
    params: &SpinParams,
    drive: &DriveConfig,
    k_max: usize,
) -> FloquetState {
    let u = drive.modulation_index(params.gamma_n);
    let table = JacobiAnger::new(epsilon.sign() * u / 2.0, k_max);
    FloquetState { epsilon, n, coeffs: table.orders().map(|o| (o, table.get(o))).collect() }
}

/// Amplitude of the `l`-photon-assisted transition for a test field on
/// sideband `k`: `J_{k+l}(u)`.
pub fn transition_amplitude(k: i64, l: i64, u: f64) -> f64 {
    let order = k + l;
    JacobiAnger::new(u, order.unsigned_abs() as usize).get(order)
}

/// Brute-force form of [`transition_amplitude`]: the overlap sum
/// `Σ_{m'−n'=l} J_{n−n'}(u/2) J_{m−m'}(−u/2)` over `|n − n'| ≤ k_max`, with
/// `k = n − m`. Equals `J_{k+l}(u)` by the Bessel addition theorem.
pub fn transition_amplitude_convolution(n: i64, m: i64, l: i64, u: f64, k_max: usize) -> f64 {
    let reach = k_max as i64 + (n - m - l).abs();
    let up = JacobiAnger::new(u / 2.0, reach as usize);
    let down = JacobiAnger::new(-u / 2.0, reach as usize);
    (-(k_max as i64)..=k_max as i64)
        .map(|offset| {
            let n_prime = n - offset;
            let m_prime = n_prime + l;
            up.get(n - n_prime) * down.get(m - m_prime)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombLine {
    pub k: i64,
    /// `ν0 + k ν_ac`, Hz.
    pub frequency: f64,
}

/// Resonance lines `ν0 + k ν_ac` with positive frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceComb {
    pub nu0: f64,
    pub nu_ac: f64,
    pub lines: Vec<CombLine>,
    /// Lines at zero or negative frequency, kept out of `lines`. A real test
    /// field at `|frequency|` reaches them through its counter-rotating half.
    pub dropped: Vec<CombLine>,
}

impl ResonanceComb {
    pub fn line(&self, k: i64) -> Option<&CombLine> {
        self.lines.iter().find(|l| l.k == k)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.frequency).collect()
    }

    /// Dropped lines mirrored to positive frequency, `|ν0 + k ν_ac|`.
    pub fn folded(&self) -> Vec<CombLine> {
        self.dropped.iter().map(|l| CombLine { k: l.k, frequency: l.frequency.abs() }).collect()
    }
}

pub fn resonance_comb(params: &SpinParams, drive: &DriveConfig, k_range: RangeInclusive<i64>) -> ResonanceComb {
    let nu0 = drive.larmor(params.gamma_n);
    let (lines, dropped): (Vec<_>, Vec<_>) =
        k_range.map(|k| CombLine { k, frequency: nu0 + k as f64 * drive.nu_ac }).partition(|l| l.frequency > 0.0);
    for l in &dropped {
        warn!(
            "comb line k={} at {:.6} Hz is not positive; a test field at {:.6} Hz reaches it only through the counter-rotating component",
            l.k,
            l.frequency,
            l.frequency.abs()
        );
    }
    ResonanceComb { nu0, nu_ac: drive.nu_ac, lines, dropped }
}
