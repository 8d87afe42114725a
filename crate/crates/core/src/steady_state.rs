//! Closed-form linear response of the driven noble-gas spin to a transverse
//! test field, the amplification factors derived from it and the observed
//! response including the alkali's direct sensitivity.
//!
//! Linearising the lab-frame Bloch equation in `B_y` gives, for
//! `P_+ = P_x + i P_y`,
//!
//! ```text
//! dP_+/dt = (i 2πγ B_z(t) − 1/T2) P_+ + 2πγ B_y(t) P0
//! ```
//!
//! The co-rotating half of `B_y cos(2πνt)` produces phasors at `ν + l ν_ac`
//! weighted by `(A_{k,l} + i B_{k,l})`; this is the rotating-wave result. The
//! counter-rotating half gives the same expression with `ν → −ν`, i.e. phasors
//! at `−ν + l ν_ac` with detuning `2π(ν0 + ν + k ν_ac)T2`. [`ResponseModel::Full`]
//! keeps both halves, which is what makes a line at negative `ν0 + k ν_ac`
//! visible at `|ν0 + k ν_ac|`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domain::{DriveConfig, SpinParams, TestField};
use crate::floquet::ResonanceComb;
use crate::specfun::{default_truncation, JacobiAnger};
use crate::TWO_PI;

/// Which halves of the linearly polarised test field are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// Co-rotating half only.
    RotatingWave,
    /// Co- and counter-rotating halves.
    #[default]
    Full,
}

/// In-phase and quadrature response coefficients, per nT of test field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseCoeffs {
    pub k: i64,
    pub l: i64,
    pub a: f64,
    pub b: f64,
}

/// `2π(ν0 − ν + k ν_ac) T2n`.
pub fn detuning(k: i64, nu: f64, params: &SpinParams, drive: &DriveConfig) -> f64 {
    TWO_PI * (drive.larmor(params.gamma_n) - nu + k as f64 * drive.nu_ac) * params.t2n
}

/// `2πγ_n P0 T2n / 2`, 1/nT.
fn coefficient_scale(params: &SpinParams) -> f64 {
    PI * params.gamma_n * params.p0n * params.t2n
}

pub fn coeff_a(k: i64, l: i64, u: f64, nu: f64, params: &SpinParams, drive: &DriveConfig) -> f64 {
    response_coeffs(k, l, u, nu, params, drive).a
}

pub fn coeff_b(k: i64, l: i64, u: f64, nu: f64, params: &SpinParams, drive: &DriveConfig) -> f64 {
    response_coeffs(k, l, u, nu, params, drive).b
}

pub fn response_coeffs(k: i64, l: i64, u: f64, nu: f64, params: &SpinParams, drive: &DriveConfig) -> ResponseCoeffs {
    let reach = (k.unsigned_abs().max((k + l).unsigned_abs())) as usize;
    let table = JacobiAnger::new(u, reach);
    let x = detuning(k, nu, params, drive);
    let weight = coefficient_scale(params) * table.get(k + l) * table.get(k) / (1.0 + x * x);
    ResponseCoeffs { k, l, a: weight, b: weight * x }
}

/// One complex exponential of `P_+` per nT of test field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phasor {
    /// Signed frequency, Hz.
    pub frequency: f64,
    pub value: Complex64,
    pub l: i64,
    pub counter_rotating: bool,
}

/// Phasors of `P_+` per nT of test field, one per output index `l` and
/// rotating half, each summed over `|k| ≤ k_max`.
pub fn sideband_phasors(
    u: f64,
    nu: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    model: ResponseModel,
    k_max: usize,
    l_max: usize,
) -> Vec<Phasor> {
    let table = JacobiAnger::new(u, k_max + l_max);
    let scale = coefficient_scale(params);
    let nu0 = drive.larmor(params.gamma_n);
    let t2 = params.t2n;
    let halves: &[bool] = match model {
        ResponseModel::RotatingWave => &[false],
        ResponseModel::Full => &[false, true],
    };
    let (k_max, l_max) = (k_max as i64, l_max as i64);
    let mut out = Vec::with_capacity(halves.len() * (2 * l_max as usize + 1));
    for &counter in halves {
        let signed_nu = if counter { -nu } else { nu };
        for l in -l_max..=l_max {
            let mut sum = Complex64::new(0.0, 0.0);
            for k in -k_max..=k_max {
                let x = TWO_PI * (nu0 - signed_nu + k as f64 * drive.nu_ac) * t2;
                let w = scale * table.get(k + l) * table.get(k) / (1.0 + x * x);
                sum += Complex64::new(w, w * x);
            }
            out.push(Phasor {
                frequency: signed_nu + l as f64 * drive.nu_ac,
                value: sum,
                l,
                counter_rotating: counter,
            });
        }
    }
    out
}

/// Real tone `a cos θ + b sin θ` with `θ = 2π f t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratures {
    pub cos: f64,
    pub sin: f64,
}

impl Quadratures {
    pub fn amplitude(&self) -> f64 {
        self.cos.hypot(self.sin)
    }

    /// Phase `φ` in `A cos(θ + φ)`.
    pub fn phase(&self) -> f64 {
        (-self.sin).atan2(self.cos)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Quadratures { cos: self.cos * s, sin: self.sin * s }
    }
}

/// Both transverse components of the response at one positive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandTone {
    pub frequency: f64,
    pub px: Quadratures,
    pub py: Quadratures,
}

/// Collect the phasors at `±frequency` into real quadratures of `P_x`, `P_y`.
pub fn real_tone(phasors: &[Phasor], frequency: f64) -> SidebandTone {
    let tol = 1e-9 * frequency.abs().max(1.0);
    let mut c = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for p in phasors {
        if (p.frequency - frequency).abs() <= tol {
            c += p.value;
        } else if (p.frequency + frequency).abs() <= tol {
            d += p.value;
        }
    }
    if frequency.abs() <= tol {
        // static part: P_x = Re, P_y = Im
        return SidebandTone {
            frequency: 0.0,
            px: Quadratures { cos: c.re, sin: 0.0 },
            py: Quadratures { cos: c.im, sin: 0.0 },
        };
    }
    // c e^{iθ} + d e^{−iθ}
    SidebandTone {
        frequency,
        px: Quadratures { cos: c.re + d.re, sin: d.im - c.im },
        py: Quadratures { cos: c.im + d.im, sin: c.re - d.re },
    }
}

/// Real tones of the transverse polarisation per nT of test field at every
/// distinct output frequency `|±ν + l ν_ac|`, ascending.
pub fn sideband_tones(
    u: f64,
    nu: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    model: ResponseModel,
    k_max: usize,
    l_max: usize,
) -> Vec<SidebandTone> {
    let phasors = sideband_phasors(u, nu, params, drive, model, k_max, l_max);
    let mut freqs: Vec<f64> = phasors.iter().map(|p| p.frequency.abs()).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.max(1.0));
    freqs.into_iter().map(|f| real_tone(&phasors, f)).collect()
}

/// `(P_x, P_y)` at time `t` from the truncated double sum, rotating-wave form.
pub fn transverse_polarization(
    t: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    test: &TestField,
    l_max: usize,
    k_max: usize,
) -> (f64, f64) {
    transverse_polarization_with(t, params, drive, test, ResponseModel::RotatingWave, l_max, k_max)
}

pub fn transverse_polarization_with(
    t: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    test: &TestField,
    model: ResponseModel,
    l_max: usize,
    k_max: usize,
) -> (f64, f64) {
    let u = drive.modulation_index(params.gamma_n);
    let phasors = sideband_phasors(u, test.nu, params, drive, model, k_max, l_max);
    let p_plus: Complex64 =
        phasors.iter().map(|p| p.value * Complex64::from_polar(1.0, TWO_PI * p.frequency * t)).sum();
    (test.b_y * p_plus.re, test.b_y * p_plus.im)
}

/// `B_eff = λ M_n P`, nT.
pub fn effective_field(px: f64, py: f64, params: &SpinParams) -> (f64, f64) {
    let s = params.coupling() * params.m_n;
    (s * px, s * py)
}

/// Signed `η_{k,l}(u) = η_{0,0}(0) J_{k+l}(u) J_k(u)`.
pub fn amplification_on_resonance(k: i64, l: i64, u: f64, params: &SpinParams) -> f64 {
    let reach = k.unsigned_abs().max((k + l).unsigned_abs()) as usize;
    let table = JacobiAnger::new(u, reach);
    params.baseline_gain() * table.get(k + l) * table.get(k)
}

/// `|B_eff,y / B_y|` at output `ν + l ν_ac`, summed coherently over `|k| ≤ k_max`
/// (rotating-wave form).
pub fn amplification_spectrum(u: f64, nu: f64, l: i64, params: &SpinParams, drive: &DriveConfig, k_max: usize) -> f64 {
    let table = JacobiAnger::new(u, k_max + l.unsigned_abs() as usize);
    let g = params.baseline_gain();
    let k_max = k_max as i64;
    let (mut a, mut b) = (0.0, 0.0);
    for k in -k_max..=k_max {
        let x = detuning(k, nu, params, drive);
        let w = g * table.get(k + l) * table.get(k) / (1.0 + x * x);
        a += w;
        b += w * x;
    }
    a.hypot(b)
}

/// Signed multi-resonance profile `Σ_k J_k² η_{0,0}(0) / √(1 + x_k²)`.
pub fn amplification_profile(u: f64, nu: f64, params: &SpinParams, drive: &DriveConfig, k_max: usize) -> f64 {
    let table = JacobiAnger::new(u, k_max);
    let g = params.baseline_gain();
    (-(k_max as i64)..=k_max as i64)
        .map(|k| {
            let x = detuning(k, nu, params, drive);
            table.get(k).powi(2) * g / (1.0 + x * x).sqrt()
        })
        .sum()
}

/// Observed response at `ν` including the alkali's unit direct sensitivity,
/// full model and default truncation.
pub fn total_response_with_direct_term(u: f64, nu: f64, params: &SpinParams, drive: &DriveConfig) -> f64 {
    let k = default_truncation(u);
    total_response(u, nu, params, drive, ResponseModel::Full, k, k)
}

/// `√((Σ sin-quadrature)² + (1 + Σ cos-quadrature)²)` of `B_y cos θ + B_eff,y`
/// relative to `B_y`. In the rotating-wave model this is
/// `√((Σ_k A_{k,0})² + (Σ_k B_{k,0} + 1)²)` scaled by `λ M_n`.
pub fn total_response(
    u: f64,
    nu: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    model: ResponseModel,
    k_max: usize,
    l_max: usize,
) -> f64 {
    let phasors = sideband_phasors(u, nu, params, drive, model, k_max, l_max);
    let py = real_tone(&phasors, nu).py.scaled(params.coupling() * params.m_n);
    py.sin.hypot(1.0 + py.cos)
}

/// Full width at half maximum of one line of the amplitude profile, `√3/(π T2n)`.
pub fn fwhm(params: &SpinParams) -> f64 {
    3f64.sqrt() / (PI * params.t2n)
}

/// Width between the half-maximum crossings of `f` around a peak at `center`,
/// searched within `±span` and refined by bisection.
pub fn half_max_width(f: impl Fn(f64) -> f64, center: f64, span: f64) -> Option<f64> {
    let peak = f(center);
    let half = 0.5 * peak;
    let crossing = |dir: f64| -> Option<f64> {
        let steps = 2000;
        let h = span / steps as f64;
        let mut inner = center;
        for i in 1..=steps {
            let outer = center + dir * h * i as f64;
            if (f(outer) - half) * (peak - half) <= 0.0 {
                let (mut lo, mut hi) = (inner, outer);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid) - half) * (peak - half) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            inner = outer;
        }
        None
    };
    Some(crossing(1.0)? - crossing(-1.0)?)
}

/// `(Σ_{|l|≤l_max} η_{k,l}², η_{0,0}(0) η_{k,0}(u))`.
pub fn power_sum_rule(k: i64, u: f64, params: &SpinParams, l_max: usize) -> (f64, f64) {
    let lhs = *power_sum_partials(k, u, params, l_max).last().unwrap();
    let table = JacobiAnger::new(u, l_max + k.unsigned_abs() as usize);
    let g = params.baseline_gain();
    (lhs, g * g * table.get(k).powi(2))
}

/// `Σ_{|l|≤m} η_{k,l}²` for `m = 0..=l_max`, from a single Bessel table.
pub fn power_sum_partials(k: i64, u: f64, params: &SpinParams, l_max: usize) -> Vec<f64> {
    let table = JacobiAnger::new(u, l_max + k.unsigned_abs() as usize);
    let g = params.baseline_gain();
    let term = |l: i64| (g * table.get(k + l) * table.get(k)).powi(2);
    let mut acc = term(0);
    let mut out = vec![acc];
    for m in 1..=l_max as i64 {
        acc += term(-m) + term(m);
        out.push(acc);
    }
    out
}

/// Which response a profile reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// `|Σ_k J_k² η_{0,0}(0)/√(1+x_k²)|`.
    Symmetric,
    /// Coherent `l = 0` gain without the direct term.
    Coherent,
    /// Observed response with the unit direct term.
    WithDirectTerm(ResponseModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationProfile {
    pub nu_grid: Vec<f64>,
    pub eta: Vec<f64>,
    pub includes_direct_term: bool,
}

/// Evaluate a profile on `grid` in parallel; output order follows the grid.
pub fn profile_on_grid(
    grid: &[f64],
    u: f64,
    params: &SpinParams,
    drive: &DriveConfig,
    kind: ProfileKind,
) -> AmplificationProfile {
    let k = default_truncation(u);
    let eta = grid
        .par_iter()
        .map(|&nu| match kind {
            ProfileKind::Symmetric => amplification_profile(u, nu, params, drive, k).abs(),
            ProfileKind::Coherent => amplification_spectrum(u, nu, 0, params, drive, k),
            ProfileKind::WithDirectTerm(model) => total_response(u, nu, params, drive, model, k, k),
        })
        .collect();
    AmplificationProfile {
        nu_grid: grid.to_vec(),
        eta,
        includes_direct_term: matches!(kind, ProfileKind::WithDirectTerm(_)),
    }
}

/// Frequency grid covering every comb line `± span` linewidths with a fixed
/// `step`; overlapping windows are merged. Points lie on `first + i·step`.
pub fn comb_grid(comb: &ResonanceComb, linewidth: f64, span: f64, step: f64) -> Vec<f64> {
    let mut windows: Vec<(f64, f64)> = comb
        .lines
        .iter()
        .map(|l| ((l.frequency - span * linewidth).max(0.0), l.frequency + span * linewidth))
        .collect();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
            _ => merged.push(w),
        }
    }
    let mut grid = Vec::new();
    for (lo, hi) in merged {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        grid.extend((0..=n).map(|i| lo + i as f64 * step));
    }
    grid
}
