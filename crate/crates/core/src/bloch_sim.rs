//! Fixed-step RK4 integration of the Bloch equations, used as a brute-force
//! oracle for the closed-form response, and the optical-rotation readout.
//!
//! Channels written by [`simulate`]:
//!
//! * `pxn`, `pyn`, `pzn`: noble-gas polarisation (always lab frame),
//! * `pxe`, `pye`, `pze`: alkali polarisation (coupled and full modes),
//! * `by_test`: the applied `B_y cos(2πνt)`, nT,
//! * `by_eff`: `λ M_n P_y^n`, nT,
//! * `by_meas`: `by_test + by_eff`, the transverse field seen by an alkali
//!   magnetometer with flat unit response.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::domain::{DriveConfig, OpticsParams, SpinParams, TestField};
use crate::error::{Error, Result};
use crate::output::fmt_f64;
use crate::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Noble-gas equation only.
    #[default]
    XeOnly,
    /// Alkali driven by the noble-gas field, no back-action.
    Coupled,
    /// Both species with mutual effective fields.
    Full,
}

impl SimMode {
    pub fn has_electron(self) -> bool {
        !matches!(self, SimMode::XeOnly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Lab,
    /// Frame rotating at the test frequency, rotating-wave approximation.
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Step, s. Zero selects the largest step the step rule allows.
    pub dt: f64,
    pub duration: f64,
    /// Samples before this time are integrated but meant to be discarded.
    pub transient_skip: f64,
    pub mode: SimMode,
    pub frame: Frame,
    /// Keep every `decimation`-th step.
    pub decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.0,
            duration: 400.0,
            transient_skip: 170.0,
            mode: SimMode::XeOnly,
            frame: Frame::Lab,
            decimation: 1,
        }
    }
}

/// Default transient skip, `5 max(T1n, T2n)`.
pub fn default_transient_skip(params: &SpinParams) -> f64 {
    5.0 * params.t1n.max(params.t2n)
}

/// Largest frequency the integrator has to resolve, Hz.
///
/// Lab frame: the test and drive frequencies and the peak instantaneous
/// Larmor frequency `γ_n (|B0| + B_ac)`. Rotating frame: the same with `B0`
/// replaced by the residual detuning. Electron modes add `γ_e (|B0| + B_ac)/Q`.
pub fn max_frequency(params: &SpinParams, drive: &DriveConfig, test: &TestField, sim: &SimConfig) -> f64 {
    let nu0 = drive.larmor(params.gamma_n);
    let swing = (params.gamma_n * drive.b_ac).abs();
    let mut f = drive.nu_ac.max(test.nu.abs());
    f = match sim.frame {
        Frame::Lab => f.max(nu0.abs() + swing),
        Frame::Rotating => f.max((nu0 - test.nu).abs() + swing),
    };
    if sim.mode.has_electron() {
        f = f.max((params.gamma_e * (drive.b0.abs() + drive.b_ac.abs()) / params.q_slowing).abs());
    }
    f
}

/// Step limit `1/(100 f_max)`.
pub fn step_limit(params: &SpinParams, drive: &DriveConfig, test: &TestField, sim: &SimConfig) -> f64 {
    1.0 / (100.0 * max_frequency(params, drive, test, sim))
}

/// The step actually used: `sim.dt`, or the limit when `sim.dt == 0`.
pub fn resolve_step(params: &SpinParams, drive: &DriveConfig, test: &TestField, sim: &SimConfig) -> Result<f64> {
    let limit = step_limit(params, drive, test, sim);
    let f_max = max_frequency(params, drive, test, sim);
    if sim.dt == 0.0 {
        return Ok(limit);
    }
    if !(sim.dt > 0.0) || !sim.dt.is_finite() {
        return Err(Error::InvalidConfig(format!("sim.dt must be positive, got {}", sim.dt)));
    }
    if sim.dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt: sim.dt, limit, f_max });
    }
    Ok(sim.dt)
}

fn check_config(sim: &SimConfig) -> Result<()> {
    if !(sim.duration > 0.0) || !sim.duration.is_finite() {
        return Err(Error::InvalidConfig(format!("sim.duration must be positive, got {}", sim.duration)));
    }
    if !(sim.transient_skip >= 0.0) || sim.transient_skip >= sim.duration {
        return Err(Error::InvalidConfig(format!(
            "sim.transient_skip must lie in [0, duration), got {}",
            sim.transient_skip
        )));
    }
    if sim.decimation == 0 {
        return Err(Error::InvalidConfig("sim.decimation must be at least 1".into()));
    }
    if sim.frame == Frame::Rotating && sim.mode != SimMode::XeOnly {
        return Err(Error::InvalidConfig("the rotating frame is available in xe_only mode only".into()));
    }
    Ok(())
}

/// Uniformly sampled named channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64) -> Self {
        TimeSeries { t0, dt, names: Vec::new(), data: Vec::new() }
    }

    /// Append a channel; its length must match the existing channels.
    pub fn add_channel(&mut self, name: &str, samples: Vec<f64>) -> Result<()> {
        if let Some(first) = self.data.first() {
            if first.len() != samples.len() {
                return Err(Error::ChannelLength { name: name.into(), got: samples.len(), expected: first.len() });
            }
        }
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.data[i] = samples;
        } else {
            self.names.push(name.into());
            self.data.push(samples);
        }
        Ok(())
    }

    pub fn with_channel(mut self, name: &str, samples: Vec<f64>) -> Result<Self> {
        self.add_channel(name, samples)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::MissingChannel(name.into()))
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Samples with `t ≥ t0 + skip`.
    pub fn after(&self, skip: f64) -> TimeSeries {
        let first = ((skip / self.dt) - 1e-9).ceil().max(0.0) as usize;
        let first = first.min(self.len());
        TimeSeries {
            t0: self.time(first),
            dt: self.dt,
            names: self.names.clone(),
            data: self.data.iter().map(|c| c[first..].to_vec()).collect(),
        }
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> TimeSeries {
        let n = n.min(self.len());
        TimeSeries {
            t0: self.t0,
            dt: self.dt,
            names: self.names.clone(),
            data: self.data.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }

    /// CSV with a `t` column followed by every channel.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![fmt_f64(self.time(i))];
            row.extend(self.data.iter().map(|c| fmt_f64(c[i])));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Binary record, all integers and floats little-endian:
    ///
    /// ```text
    /// magic     8 bytes  "FLQTSER\0"
    /// version   u32      1
    /// dt        f64
    /// t0        f64
    /// channels  u32
    /// samples   u64
    /// names     channels × (u32 byte length, UTF-8 bytes)
    /// data      channels × samples × f64, channel-major
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&(self.names.len() as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for n in &self.names {
            w.write_all(&(n.len() as u32).to_le_bytes())?;
            w.write_all(n.as_bytes())?;
        }
        for c in &self.data {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dt = read_f64(&mut r)?;
        let t0 = read_f64(&mut r)?;
        let n_channels = read_u32(&mut r)? as usize;
        let n_samples = read_u64(&mut r)? as usize;
        let mut names = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
        }
        let mut data = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let mut c = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                c.push(read_f64(&mut r)?);
            }
            data.push(c);
        }
        Ok(TimeSeries { t0, dt, names, data })
    }
}

const BINARY_MAGIC: &[u8; 8] = b"FLQTSER\0";
const BINARY_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[derive(Clone, Copy)]
struct State {
    n: Vector3<f64>,
    e: Vector3<f64>,
}

impl State {
    fn axpy(&self, h: f64, d: &State) -> State {
        State { n: self.n + d.n * h, e: self.e + d.e * h }
    }

    fn is_finite(&self) -> bool {
        self.n.iter().chain(self.e.iter()).all(|v| v.is_finite())
    }
}

struct Rhs {
    mode: SimMode,
    frame: Frame,
    wn: f64,
    we: f64,
    b0: f64,
    b_ac: f64,
    w_ac: f64,
    b_y: f64,
    w_test: f64,
    nu0: f64,
    nu_test: f64,
    inv_t2n: f64,
    inv_t1n: f64,
    p0n: f64,
    inv_t2e_q: f64,
    inv_t1e_q: f64,
    p0e: f64,
    lambda_mn: f64,
    lambda_me: f64,
}

fn relax(p: &Vector3<f64>, p0: f64, inv_t2: f64, inv_t1: f64) -> Vector3<f64> {
    Vector3::new(-p.x * inv_t2, -p.y * inv_t2, (p0 - p.z) * inv_t1)
}

impl Rhs {
    fn lab_field(&self, t: f64) -> Vector3<f64> {
        Vector3::new(0.0, self.b_y * (self.w_test * t).cos(), self.b0 + self.b_ac * (self.w_ac * t).cos())
    }

    fn eval(&self, t: f64, s: &State) -> State {
        match self.frame {
            Frame::Rotating => {
                // angular-frequency vector of the rotating-wave Hamiltonian
                let omega = Vector3::new(
                    0.0,
                    self.wn * self.b_y / 2.0,
                    TWO_PI * (self.nu0 - self.nu_test) + self.wn * self.b_ac * (self.w_ac * t).cos(),
                );
                State { n: omega.cross(&s.n) + relax(&s.n, self.p0n, self.inv_t2n, self.inv_t1n), e: Vector3::zeros() }
            }
            Frame::Lab => {
                let b = self.lab_field(t);
                let bn = match self.mode {
                    SimMode::Full => b + s.e * self.lambda_me,
                    _ => b,
                };
                let dn = (bn * self.wn).cross(&s.n) + relax(&s.n, self.p0n, self.inv_t2n, self.inv_t1n);
                let de = if self.mode.has_electron() {
                    let be = b + s.n * self.lambda_mn;
                    (be * self.we).cross(&s.e) + relax(&s.e, self.p0e, self.inv_t2e_q, self.inv_t1e_q)
                } else {
                    Vector3::zeros()
                };
                State { n: dn, e: de }
            }
        }
    }

    fn rk4(&self, t: f64, s: &State, h: f64) -> State {
        let k1 = self.eval(t, s);
        let k2 = self.eval(t + 0.5 * h, &s.axpy(0.5 * h, &k1));
        let k3 = self.eval(t + 0.5 * h, &s.axpy(0.5 * h, &k2));
        let k4 = self.eval(t + h, &s.axpy(h, &k3));
        State {
            n: s.n + (k1.n + k2.n * 2.0 + k3.n * 2.0 + k4.n) * (h / 6.0),
            e: s.e + (k1.e + k2.e * 2.0 + k3.e * 2.0 + k4.e) * (h / 6.0),
        }
    }

    /// Lab-frame noble-gas polarisation from the integrated state.
    fn lab_n(&self, t: f64, s: &State) -> Vector3<f64> {
        match self.frame {
            Frame::Lab => s.n,
            Frame::Rotating => {
                // P_+ = P̃_+ e^{i 2πνt}
                let (sin, cos) = (TWO_PI * self.nu_test * t).sin_cos();
                Vector3::new(cos * s.n.x - sin * s.n.y, sin * s.n.x + cos * s.n.y, s.n.z)
            }
        }
    }
}

/// Integrate from `Pⁿ = (0, 0, P0n)` (and `Pᵉ = (0, 0, P0e)`).
pub fn simulate(params: &SpinParams, drive: &DriveConfig, test: &TestField, sim: &SimConfig) -> Result<TimeSeries> {
    check_config(sim)?;
    let dt = resolve_step(params, drive, test, sim)?;
    let f_max = max_frequency(params, drive, test, sim);
    if sim.mode.has_electron() {
        let steps = sim.duration / dt;
        if steps > 1e7 {
            warn!(
                "electron Larmor frequency {f_max:.1} Hz forces {steps:.2e} steps; xe_only mode with the by_meas channel is the cheap comparison path"
            );
        }
    }
    let lambda = params.coupling();
    let rhs = Rhs {
        mode: sim.mode,
        frame: sim.frame,
        wn: TWO_PI * params.gamma_n,
        we: TWO_PI * params.gamma_e / params.q_slowing,
        b0: drive.b0,
        b_ac: drive.b_ac,
        w_ac: TWO_PI * drive.nu_ac,
        b_y: test.b_y,
        w_test: TWO_PI * test.nu,
        nu0: drive.larmor(params.gamma_n),
        nu_test: test.nu,
        inv_t2n: 1.0 / params.t2n,
        inv_t1n: 1.0 / params.t1n,
        p0n: params.p0n,
        inv_t2e_q: 1.0 / (params.t2e * params.q_slowing),
        inv_t1e_q: 1.0 / (params.t1e * params.q_slowing),
        p0e: params.p0e,
        lambda_mn: lambda * params.m_n,
        lambda_me: lambda * params.m_e,
    };

    let n_steps = (sim.duration / dt).round() as usize;
    let n_out = n_steps / sim.decimation + 1;
    let mut chans: Vec<Vec<f64>> = vec![Vec::with_capacity(n_out); if sim.mode.has_electron() { 6 } else { 3 }];
    let mut by_test = Vec::with_capacity(n_out);

    let mut s = State {
        n: Vector3::new(0.0, 0.0, params.p0n),
        e: Vector3::new(0.0, 0.0, if sim.mode.has_electron() { params.p0e } else { 0.0 }),
    };
    let mut record = |t: f64, s: &State| {
        let n = rhs.lab_n(t, s);
        chans[0].push(n.x);
        chans[1].push(n.y);
        chans[2].push(n.z);
        if chans.len() == 6 {
            chans[3].push(s.e.x);
            chans[4].push(s.e.y);
            chans[5].push(s.e.z);
        }
        by_test.push(test.b_y * (rhs.w_test * t).cos());
    };
    record(0.0, &s);
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * dt;
        s = rhs.rk4(t, &s, dt);
        if !s.is_finite() {
            return Err(Error::NonFiniteState { step, time: step as f64 * dt });
        }
        if step % sim.decimation == 0 {
            record(step as f64 * dt, &s);
        }
    }

    let by_eff: Vec<f64> = chans[1].iter().map(|py| rhs.lambda_mn * py).collect();
    let by_meas: Vec<f64> = by_test.iter().zip(&by_eff).map(|(a, b)| a + b).collect();
    let names = ["pxn", "pyn", "pzn", "pxe", "pye", "pze"];
    let mut out = TimeSeries::new(0.0, dt * sim.decimation as f64);
    for (name, c) in names.iter().zip(chans) {
        out.add_channel(name, c)?;
    }
    out.add_channel("by_test", by_test)?;
    out.add_channel("by_eff", by_eff)?;
    out.add_channel("by_meas", by_meas)?;
    Ok(out)
}

/// Independent runs in parallel; results keep the input order.
pub fn simulate_batch(runs: &[(SpinParams, DriveConfig, TestField, SimConfig)]) -> Vec<Result<TimeSeries>> {
    runs.par_iter().map(|(p, d, t, s)| simulate(p, d, t, s)).collect()
}

/// Optical rotation `θ = l r_e c f n P_x^e D(ν_pr) / 4` sample by sample.
pub fn readout_theta(series: &TimeSeries, optics: &OpticsParams) -> Result<TimeSeries> {
    let pxe = series.channel("pxe")?;
    let scale = optics.rotation_per_polarization();
    TimeSeries::new(series.t0, series.dt).with_channel("theta", pxe.iter().map(|p| scale * p).collect())
}

/// Minimum number of periods for [`steady_amplitude`].
pub const MIN_PERIODS: f64 = 5.0;
/// Allowed mismatch between the window and a whole number of periods, relative to the window.
pub const PERIOD_TOLERANCE: f64 = 1e-3;

/// Least-squares fit of `a cos θ + b sin θ + c` (`θ = 2π f t`) on the samples
/// after `skip`, returned as `(A, φ)` with `a cos θ + b sin θ = A cos(θ + φ)`.
/// Times are absolute, so `φ` is the phase at `t = 0`.
pub fn steady_amplitude(series: &TimeSeries, channel: &str, frequency: f64, skip: f64) -> Result<(f64, f64)> {
    let window = series.after(skip);
    let y = window.channel(channel)?;
    let span = y.len() as f64 * window.dt;
    check_window(frequency, span)?;
    let w = TWO_PI * frequency;
    let mut m = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (i, &v) in y.iter().enumerate() {
        let th = w * window.time(i);
        let basis = Vector3::new(th.cos(), th.sin(), 1.0);
        m += basis * basis.transpose();
        rhs += basis * v;
    }
    let sol = m.lu().solve(&rhs).ok_or_else(|| Error::RankDeficient("projection basis".into()))?;
    let (a, b) = (sol[0], sol[1]);
    Ok((a.hypot(b), (-b).atan2(a)))
}

/// Reject windows that are too short or not a whole number of periods of `frequency`.
pub fn check_window(frequency: f64, span: f64) -> Result<()> {
    let periods = frequency * span;
    if periods < MIN_PERIODS {
        return Err(Error::WindowTooShort { frequency, periods, min: MIN_PERIODS });
    }
    if (periods - periods.round()).abs() / periods > PERIOD_TOLERANCE {
        return Err(Error::NonIntegerWindow { frequency, periods });
    }
    Ok(())
}

/// Number of samples of step `dt` closest to a window of at least `min_span`
/// that holds a whole number of periods of every frequency in `freqs`
/// within [`PERIOD_TOLERANCE`], searching up to `max_span`.
pub fn integer_window(freqs: &[f64], dt: f64, min_span: f64, max_span: f64) -> Option<usize> {
    let first = (min_span / dt).ceil() as usize;
    let last = (max_span / dt).floor() as usize;
    (first..=last).find(|&n| {
        let span = n as f64 * dt;
        freqs.iter().all(|&f| {
            let p = f * span;
            (p - p.round()).abs() / p <= PERIOD_TOLERANCE / 10.0
        })
    })
}

/// Mismatch, in periods, that [`spectral_window`] accepts for every tone. A
/// tone this far from its bin keeps at least `sinc(0.01) > 1 − 1.7e-4` of its
/// amplitude in the rectangular-window spectrum.
pub const WINDOW_PHASE_TOLERANCE: f64 = 0.01;

/// Largest sample count `n` with `min_span ≤ n·dt ≤ max_span` for which every
/// frequency in `freqs` completes a whole number of periods to within
/// [`WINDOW_PHASE_TOLERANCE`]. When no such `n` exists, the count with the
/// smallest worst mismatch. Returns `(n, worst mismatch in periods)`.
pub fn spectral_window(freqs: &[f64], dt: f64, min_span: f64, max_span: f64) -> Option<(usize, f64)> {
    let first = ((min_span / dt).ceil() as usize).max(1);
    let last = (max_span / dt + 1e-9).floor() as usize;
    if first > last {
        return None;
    }
    let mismatch = |n: usize| {
        let span = n as f64 * dt;
        freqs
            .iter()
            .map(|&f| {
                let p = f * span;
                (p - p.round()).abs()
            })
            .fold(0.0, f64::max)
    };
    let mut best = (last, f64::INFINITY);
    for n in (first..=last).rev() {
        let m = mismatch(n);
        if m <= WINDOW_PHASE_TOLERANCE {
            return Some((n, m));
        }
        if m < best.1 {
            best = (n, m);
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn synthetic(f: &[(f64, f64, f64)], dt: f64, n: usize) -> TimeSeries {
        let y = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                f.iter().map(|&(a, fr, ph)| a * (TWO_PI * fr * t + ph).cos()).sum()
            })
            .collect();
        TimeSeries::new(0.0, dt).with_channel("y", y).unwrap()
    }

    #[test]
    fn projection_identity() {
        let s = synthetic(&[(1.0, 2.0, 0.7)], 1e-3, 5000);
        let (a, ph) = steady_amplitude(&s, "y", 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ph, 0.7, epsilon = 1e-10);
    }

    #[test]
    fn two_tones_separate() {
        let s = synthetic(&[(0.3, 2.0, 0.1), (1.7, 3.5, -2.0)], 1e-3, 4000);
        let (a1, p1) = steady_amplitude(&s, "y", 2.0, 0.0).unwrap();
        let (a2, p2) = steady_amplitude(&s, "y", 3.5, 0.0).unwrap();
        assert_abs_diff_eq!(a1, 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(p1, 0.1, epsilon = 1e-8);
        assert_abs_diff_eq!(a2, 1.7, epsilon = 1e-8);
        assert_abs_diff_eq!(p2, -2.0, epsilon = 1e-8);
    }

    #[test]
    fn short_or_fractional_windows_rejected() {
        let s = synthetic(&[(1.0, 2.0, 0.0)], 1e-3, 2000);
        assert!(matches!(steady_amplitude(&s, "y", 2.0, 0.0), Err(Error::WindowTooShort { .. })));
        let s = synthetic(&[(1.0, 2.0, 0.0)], 1e-3, 5250);
        assert!(matches!(steady_amplitude(&s, "y", 2.0, 0.0), Err(Error::NonIntegerWindow { .. })));
        assert!(matches!(steady_amplitude(&s, "z", 2.0, 0.0), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn quiet_spin_stays_at_equilibrium() {
        let p = SpinParams { t1n: 2.0, t2n: 2.0, ..Default::default() };
        let d = DriveConfig { b_ac: 0.0, ..Default::default() };
        let t = TestField { b_y: 0.0, nu: 11.539 };
        let sim = SimConfig { duration: 20.0, transient_skip: 0.0, decimation: 100, ..Default::default() };
        let s = simulate(&p, &d, &t, &sim).unwrap();
        let pz = s.channel("pzn").unwrap();
        assert!((pz[pz.len() - 1] - p.p0n).abs() < 1e-9);
        assert!(s.channel("pxn").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn longitudinal_drive_produces_no_tilt() {
        let p = SpinParams::default();
        let d = DriveConfig::default();
        let t = TestField { b_y: 0.0, nu: 11.539 };
        let sim = SimConfig { duration: 5.0, transient_skip: 0.0, ..Default::default() };
        let s = simulate(&p, &d, &t, &sim).unwrap();
        assert!(s.channel("pxn").unwrap().iter().all(|&v| v == 0.0));
        assert!(s.channel("pyn").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_rule_enforced() {
        let p = SpinParams::default();
        let d = DriveConfig::default();
        let t = TestField::default();
        let sim = SimConfig { dt: 0.01, duration: 1.0, transient_skip: 0.0, ..Default::default() };
        assert!(matches!(simulate(&p, &d, &t, &sim), Err(Error::StepTooLarge { .. })));
        let rot = SimConfig { frame: Frame::Rotating, mode: SimMode::Coupled, ..sim };
        assert!(matches!(simulate(&p, &d, &t, &rot), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn electron_modes_use_electron_larmor() {
        let p = SpinParams::default();
        let d = DriveConfig::default();
        let t = TestField::default();
        let sim = SimConfig { mode: SimMode::Coupled, ..Default::default() };
        let f = max_frequency(&p, &d, &t, &sim);
        assert_abs_diff_eq!(f, 28.0 * (d.b0 + d.b_ac) / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_state_reports_step() {
        let p = SpinParams { t2n: 1e-300, ..Default::default() };
        let d = DriveConfig::default();
        let t = TestField::default();
        let sim = SimConfig { duration: 1.0, transient_skip: 0.0, ..Default::default() };
        match simulate(&p, &d, &t, &sim) {
            Err(Error::NonFiniteState { step, .. }) => assert!(step >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn polarisation_stays_in_the_ball() {
        let p = SpinParams { t1n: 2.0, t2n: 2.0, ..Default::default() };
        let d = DriveConfig::default();
        let t = TestField { b_y: 5.0, nu: 11.539 };
        let sim = SimConfig { duration: 10.0, transient_skip: 0.0, ..Default::default() };
        let s = simulate(&p, &d, &t, &sim).unwrap();
        let (x, y, z) = (s.channel("pxn").unwrap(), s.channel("pyn").unwrap(), s.channel("pzn").unwrap());
        let bound = p.p0n.abs() + 1e-9;
        for i in 0..s.len() {
            assert!((x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt() <= bound);
        }
    }

    fn final_state(dt: f64) -> [f64; 3] {
        let p = SpinParams { t1n: 2.0, t2n: 2.0, ..Default::default() };
        let d = DriveConfig::default();
        let t = TestField { b_y: 0.5, nu: 11.539 };
        let sim = SimConfig { dt, duration: 2.0, transient_skip: 0.0, ..Default::default() };
        let s = simulate(&p, &d, &t, &sim).unwrap();
        let n = s.len() - 1;
        ["pxn", "pyn", "pzn"].map(|c| s.channel(c).unwrap()[n])
    }

    #[test]
    fn spectral_window_prefers_long_aligned_windows() {
        let dt = 1e-3;
        let (n, m) = spectral_window(&[1.5, 11.539], dt, 5.0, 200.0).unwrap();
        assert!(m <= WINDOW_PHASE_TOLERANCE);
        // 296 drive periods hold 2277.00 test periods
        assert!((n as f64 * dt - 592.0 / 3.0).abs() < 0.01, "{}", n as f64 * dt);
        let (n, _) = spectral_window(&[1.0], 0.01, 1.0, 10.0).unwrap();
        assert_eq!(n, 1000);
        assert!(spectral_window(&[1.0], 0.01, 5.0, 4.0).is_none());
        let (_, m) = spectral_window(&[1.0, 1.0 / 3.0], 0.01, 1.0, 1.5).unwrap();
        assert!(m > WINDOW_PHASE_TOLERANCE);
    }

    #[test]
    fn fourth_order_convergence() {
        let dt = 1.0 / 1600.0;
        let reference = final_state(dt / 8.0);
        let err = |dt: f64| {
            let s = final_state(dt);
            (0..3).map(|i| (s[i] - reference[i]).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = err(dt) / err(dt / 2.0);
        assert!(ratio > 13.0 && ratio < 19.0, "{ratio}");
    }

    #[test]
    fn rotating_frame_agrees_with_lab() {
        let p = SpinParams { t1n: 2.0, t2n: 2.0, ..Default::default() };
        let d = DriveConfig::default();
        let t = TestField { b_y: 1e-3, nu: 11.539 };
        let base = SimConfig { duration: 20.0 + 26.0 / 3.0, transient_skip: 20.0, decimation: 1, ..Default::default() };
        let dt = 1.0 / 3000.0;
        let lab = simulate(&p, &d, &t, &SimConfig { dt, ..base }).unwrap();
        let rot = simulate(&p, &d, &t, &SimConfig { dt, frame: Frame::Rotating, ..base }).unwrap();
        for l in -1i64..=2 {
            let f = t.nu + l as f64 * d.nu_ac;
            let (a, _) = steady_amplitude(&lab, "pyn", f, 20.0).unwrap();
            let (b, _) = steady_amplitude(&rot, "pyn", f, 20.0).unwrap();
            assert!((a - b).abs() / a < 0.01, "l={l}: {a} vs {b}");
        }
    }

    #[test]
    fn readout_is_linear_and_detuning_sensitive() {
        let s = TimeSeries::new(0.0, 0.1).with_channel("pxe", vec![0.0, 0.1, -0.2]).unwrap();
        let o = OpticsParams::default();
        let th = readout_theta(&s, &o).unwrap();
        let th = th.channel("theta").unwrap();
        assert_eq!(th[0], 0.0);
        let s2 = TimeSeries::new(0.0, 0.1).with_channel("pxe", vec![0.0, 0.2, -0.4]).unwrap();
        let th2 = readout_theta(&s2, &o).unwrap();
        assert_eq!(th2.channel("theta").unwrap()[1], 2.0 * th[1]);
        let zero = OpticsParams { nu_pr: o.nu_d2, ..o };
        assert!(readout_theta(&s, &zero).unwrap().channel("theta").unwrap().iter().all(|&v| v == 0.0));
        let missing = TimeSeries::new(0.0, 0.1).with_channel("pxn", vec![0.0]).unwrap();
        assert!(matches!(readout_theta(&missing, &o), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn binary_round_trip() {
        let s = synthetic(&[(1.0, 2.0, PI / 3.0)], 1e-2, 50).with_channel("z", vec![-0.5; 50]).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"FLQTSER\0");
        let back = TimeSeries::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(TimeSeries::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn channel_lengths_checked() {
        let s = TimeSeries::new(0.0, 1.0).with_channel("a", vec![1.0, 2.0]).unwrap();
        assert!(matches!(s.with_channel("b", vec![1.0]), Err(Error::ChannelLength { .. })));
    }

    #[test]
    fn after_drops_leading_samples() {
        let s = TimeSeries::new(0.0, 0.5).with_channel("a", vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let tail = s.after(1.0);
        assert_eq!(tail.channel("a").unwrap(), &[2.0, 3.0]);
        assert_eq!(tail.t0, 1.0);
    }

    #[test]
    fn integer_window_search() {
        let n = integer_window(&[11.539, 1.5], 1e-3, 10.0, 40.0).unwrap();
        for f in [11.539, 1.5] {
            check_window(f, n as f64 * 1e-3).unwrap();
        }
    }
}
