//! Physical parameters of the noble-gas / alkali system, the periodic drive,
//! the measured test field and the probe optics.
//!
//! All types are plain immutable values. Derived quantities (Larmor frequency,
//! modulation index, effective-field coupling) are always recomputed from the
//! stored fields and never stored themselves.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::TWO_PI;

/// Threshold on `2π γ_n B_y T_1n` above which the linear-response treatment is flagged.
pub const SMALL_SIGNAL_LIMIT: f64 = 0.1;

/// Gain `|η_{0,0}(0)|` that the default parameter set is calibrated to.
pub const DEFAULT_BASELINE_GAIN: f64 = 110.0;

/// Constants of the two-species spin system.
///
/// `m_n` and `m_e` are the effective-field scales at unity polarisation, in nT.
/// Only the product `κ0 · m_n · p0n · γ_n · t2n` is observable in the
/// steady-state response; [`SpinParams::with_baseline_gain`] solves `m_n` for a
/// target gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinParams {
    /// Noble-gas gyromagnetic ratio, Hz/nT.
    pub gamma_n: f64,
    /// Alkali electron gyromagnetic ratio, Hz/nT.
    pub gamma_e: f64,
    pub t1n: f64,
    pub t2n: f64,
    pub t1e: f64,
    pub t2e: f64,
    /// Equilibrium noble-gas polarisation; the sign sets the Fano asymmetry.
    pub p0n: f64,
    pub p0e: f64,
    pub m_n: f64,
    pub m_e: f64,
    /// Fermi-contact enhancement factor.
    pub kappa0: f64,
    /// Alkali slowing-down factor, held constant.
    pub q_slowing: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        let base = SpinParams {
            gamma_n: 0.01178,
            gamma_e: 28.0,
            t1n: 34.0,
            t2n: 34.0,
            // only "T2e ~ 1 ms" is known; both alkali times default to it
            t1e: 1e-3,
            t2e: 1e-3,
            p0n: -0.3,
            p0e: 0.5,
            m_n: 1.0,
            m_e: 1.0,
            kappa0: 540.0,
            q_slowing: 4.0,
        };
        // alkali back-action field λ m_e p0e of about 1 nT
        let m_e = 1.0 / (base.coupling() * base.p0e);
        SpinParams { m_e, ..base }.with_baseline_gain(DEFAULT_BASELINE_GAIN)
    }
}

impl SpinParams {
    /// Effective-field coupling `λ = 8π κ0 / 3`.
    pub fn coupling(&self) -> f64 {
        8.0 * PI * self.kappa0 / 3.0
    }

    /// Signed on-resonance gain of the undriven system,
    /// `η_{0,0}(0) = ½ λ m_n p0n (2π γ_n) t2n = (4π/3) κ0 m_n p0n (2π γ_n) t2n`.
    pub fn baseline_gain(&self) -> f64 {
        0.5 * self.coupling() * self.m_n * self.p0n * TWO_PI * self.gamma_n * self.t2n
    }

    /// Copy with `m_n` chosen so that `|η_{0,0}(0)| = target`. The sign of the
    /// gain stays that of `p0n`.
    pub fn with_baseline_gain(self, target: f64) -> Self {
        let per_unit = 0.5 * self.coupling() * self.p0n.abs() * TWO_PI * self.gamma_n * self.t2n;
        SpinParams { m_n: target.abs() / per_unit, ..self }
    }
}

/// Bias field and longitudinal periodic drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    /// Bias field along z, nT.
    pub b0: f64,
    /// Drive amplitude along z, nT.
    pub b_ac: f64,
    /// Drive frequency, Hz.
    pub nu_ac: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        // nu0 = 10.039 Hz, nu_ac = 1.5 Hz, u = 3.12
        DriveConfig::from_frequencies(SpinParams::default().gamma_n, 10.039, 1.5, 3.12)
    }
}

impl DriveConfig {
    /// Drive that realises Larmor frequency `nu0` and modulation index `u`.
    pub fn from_frequencies(gamma_n: f64, nu0: f64, nu_ac: f64, u: f64) -> Self {
        DriveConfig { b0: nu0 / gamma_n, b_ac: u * nu_ac / gamma_n, nu_ac }
    }

    /// Larmor frequency `ν0 = γ_n B0`, Hz.
    pub fn larmor(&self, gamma_n: f64) -> f64 {
        gamma_n * self.b0
    }

    /// Modulation index `u = γ_n B_ac / ν_ac`.
    pub fn modulation_index(&self, gamma_n: f64) -> f64 {
        gamma_n * self.b_ac / self.nu_ac
    }

    /// Same bias and frequency, drive amplitude set for modulation index `u`.
    pub fn with_modulation_index(self, gamma_n: f64, u: f64) -> Self {
        DriveConfig { b_ac: u * self.nu_ac / gamma_n, ..self }
    }
}

/// Transverse test field `b_y cos(2π ν t) ŷ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestField {
    /// Amplitude, nT.
    pub b_y: f64,
    /// Frequency, Hz.
    pub nu: f64,
}

impl Default for TestField {
    fn default() -> Self {
        // first upper sideband of the default drive
        TestField { b_y: 1e-3, nu: 11.539 }
    }
}

impl TestField {
    /// `2π γ_n B_y T_1n`; linear response needs this well below one.
    pub fn small_signal_parameter(&self, params: &SpinParams) -> f64 {
        TWO_PI * params.gamma_n * self.b_y * params.t1n
    }
}

/// Probe-beam optics for the optical-rotation readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsParams {
    /// Optical path length, cm.
    pub path_length: f64,
    /// Classical electron radius, cm.
    pub r_e: f64,
    /// Speed of light, cm/s.
    pub c: f64,
    /// Oscillator strength of the probed line.
    pub oscillator_f: f64,
    /// Alkali number density, cm⁻³.
    pub alkali_density: f64,
    /// Probe frequency, Hz.
    pub nu_pr: f64,
    /// Line-centre frequency, Hz.
    pub nu_d2: f64,
    /// Optical FWHM, Hz.
    pub gamma_opt: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        let nu_d2 = 384.230_484e12;
        OpticsParams {
            path_length: 0.8,
            r_e: 2.8e-13,
            c: 2.997_924_58e10,
            oscillator_f: 2.0 / 3.0,
            alkali_density: 1e14,
            nu_pr: nu_d2 + 110e9,
            nu_d2,
            gamma_opt: 4.5e9,
        }
    }
}

impl OpticsParams {
    /// Dispersive profile `D(ν_pr) = Δ / (Δ² + (Γ/2)²)`, `Δ = ν_pr − ν_D2`, in 1/Hz.
    pub fn dispersion(&self) -> f64 {
        let detuning = self.nu_pr - self.nu_d2;
        let half = 0.5 * self.gamma_opt;
        detuning / (detuning * detuning + half * half)
    }

    /// Rotation per unit transverse electron polarisation, `l r_e c f n D / 4`.
    pub fn rotation_per_polarization(&self) -> f64 {
        self.path_length * self.r_e * self.c * self.oscillator_f * self.alkali_density * self.dispersion() / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
    pub severity: Severity,
}

/// Outcome of [`validate`]; an empty report means every constraint holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.items.iter().any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.items.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.items.iter().filter(|v| v.severity == Severity::Warning)
    }

    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.items.push(Violation { field: field.to_string(), message: message.into(), severity: Severity::Error });
    }

    fn warn(&mut self, field: &str, message: impl Into<String>) {
        self.items.push(Violation { field: field.to_string(), message: message.into(), severity: Severity::Warning });
    }

    /// Append another report.
    pub fn merge(&mut self, other: ValidationReport) {
        self.items.extend(other.items);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.items {
            let tag = match v.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

fn check_finite(report: &mut ValidationReport, field: &str, value: f64) -> bool {
    if value.is_finite() {
        true
    } else {
        report.error(field, format!("must be finite, got {value}"));
        false
    }
}

/// Check every invariant of the spin, drive and test-field parameters.
pub fn validate(params: &SpinParams, drive: &DriveConfig, test: &TestField) -> ValidationReport {
    let mut r = ValidationReport::default();

    for (name, v) in
        [("spin.t1n", params.t1n), ("spin.t2n", params.t2n), ("spin.t1e", params.t1e), ("spin.t2e", params.t2e)]
    {
        if check_finite(&mut r, name, v) && v <= 0.0 {
            r.error(name, "relaxation time must be positive");
        }
    }
    for (name, v) in [("spin.p0n", params.p0n), ("spin.p0e", params.p0e)] {
        if check_finite(&mut r, name, v) && v.abs() > 1.0 {
            r.error(name, "polarization must lie in [-1, 1]");
        }
    }
    for (name, v) in [("spin.gamma_n", params.gamma_n), ("spin.gamma_e", params.gamma_e)] {
        if check_finite(&mut r, name, v) && v == 0.0 {
            r.error(name, "gyromagnetic ratio must be nonzero");
        }
    }
    check_finite(&mut r, "spin.m_n", params.m_n);
    check_finite(&mut r, "spin.m_e", params.m_e);
    if check_finite(&mut r, "spin.kappa0", params.kappa0) && params.kappa0 <= 0.0 {
        r.error("spin.kappa0", "enhancement factor must be positive");
    }
    if check_finite(&mut r, "spin.q_slowing", params.q_slowing) && params.q_slowing < 1.0 {
        r.error("spin.q_slowing", "slowing-down factor must be at least 1");
    }

    check_finite(&mut r, "drive.b0", drive.b0);
    if check_finite(&mut r, "drive.nu_ac", drive.nu_ac) && drive.nu_ac <= 0.0 {
        r.error("drive.nu_ac", "drive frequency must be positive");
    }
    if check_finite(&mut r, "drive.b_ac", drive.b_ac) && drive.b_ac < 0.0 {
        r.error("drive.b_ac", "drive amplitude must be non-negative");
    }
    if params.gamma_n.is_finite() && drive.b_ac.is_finite() && drive.nu_ac > 0.0 {
        let u = drive.modulation_index(params.gamma_n);
        if u < 0.0 {
            r.error("drive.b_ac", format!("modulation index must be non-negative, got {u}"));
        }
    }

    if check_finite(&mut r, "test.b_y", test.b_y) && test.b_y < 0.0 {
        r.error("test.b_y", "test amplitude must be non-negative");
    }
    if check_finite(&mut r, "test.nu", test.nu) && test.nu < 0.0 {
        r.error("test.nu", "test frequency must be non-negative");
    }
    let s = test.small_signal_parameter(params);
    if s.is_finite() && s > SMALL_SIGNAL_LIMIT {
        r.warn(
            "test.b_y",
            format!("2*pi*gamma_n*b_y*t1n = {s:.3} exceeds {SMALL_SIGNAL_LIMIT}; linear response may not hold"),
        );
    }
    r
}

/// Check the probe optics.
pub fn validate_optics(optics: &OpticsParams) -> ValidationReport {
    let mut r = ValidationReport::default();
    for (name, v) in [
        ("optics.path_length", optics.path_length),
        ("optics.r_e", optics.r_e),
        ("optics.c", optics.c),
        ("optics.oscillator_f", optics.oscillator_f),
        ("optics.alkali_density", optics.alkali_density),
        ("optics.nu_pr", optics.nu_pr),
        ("optics.nu_d2", optics.nu_d2),
    ] {
        check_finite(&mut r, name, v);
    }
    if check_finite(&mut r, "optics.gamma_opt", optics.gamma_opt) && optics.gamma_opt <= 0.0 {
        r.error("optics.gamma_opt", "optical linewidth must be positive");
    }
    if !(optics.nu_pr - optics.nu_d2).is_finite() {
        r.error("optics.nu_pr", "probe detuning must be finite");
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate_cleanly() {
        let report = validate(&SpinParams::default(), &DriveConfig::default(), &TestField::default());
        assert!(report.is_empty(), "{report}");
        assert!(validate_optics(&OpticsParams::default()).is_empty());
    }

    #[test]
    fn default_values() {
        let p = SpinParams::default();
        assert_eq!(p.t1n, 34.0);
        assert_eq!(p.t2n, 34.0);
        assert_eq!(p.kappa0, 540.0);
        assert_relative_eq!(p.baseline_gain(), -110.0, max_relative = 1e-12);
        let d = DriveConfig::default();
        assert_relative_eq!(d.larmor(p.gamma_n), 10.039, max_relative = 1e-14);
        assert_relative_eq!(d.modulation_index(p.gamma_n), 3.12, max_relative = 1e-14);
        // B0 ≈ 853 nT, B_ac ≈ 397 nT
        assert!((d.b0 - 853.0).abs() < 1.0);
        assert!((d.b_ac - 397.0).abs() < 1.0);
    }

    #[test]
    fn negative_relaxation_rejected() {
        let p = SpinParams { t2n: -1.0, ..Default::default() };
        let report = validate(&p, &DriveConfig::default(), &TestField::default());
        let errs: Vec<_> = report.errors().collect();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "spin.t2n");
        assert_eq!(errs[0].message, "relaxation time must be positive");
    }

    #[test]
    fn small_signal_warning_at_threshold_case() {
        let p = SpinParams::default();
        let b_y = 0.5 / (TWO_PI * p.gamma_n * p.t1n);
        let t = TestField { b_y, nu: 11.539 };
        assert_relative_eq!(t.small_signal_parameter(&p), 0.5, max_relative = 1e-12);
        let report = validate(&p, &DriveConfig::default(), &t);
        assert!(!report.has_errors());
        assert_eq!(report.warnings().count(), 1);
    }

    #[test]
    fn other_violations_listed() {
        let p = SpinParams { p0n: 1.5, kappa0: 0.0, q_slowing: 0.5, ..Default::default() };
        let d = DriveConfig { nu_ac: 0.0, ..Default::default() };
        let t = TestField { b_y: -1.0, nu: f64::NAN };
        let report = validate(&p, &d, &t);
        let fields: Vec<_> = report.errors().map(|v| v.field.as_str()).collect();
        for f in ["spin.p0n", "spin.kappa0", "spin.q_slowing", "drive.nu_ac", "test.b_y", "test.nu"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn zero_drive_means_zero_index() {
        let d = DriveConfig { b_ac: 0.0, ..Default::default() };
        assert_eq!(d.modulation_index(0.01178), 0.0);
    }

    #[test]
    fn optics_zero_detuning_kills_dispersion() {
        let o = OpticsParams { nu_pr: 384e12, nu_d2: 384e12, ..Default::default() };
        assert_eq!(o.dispersion(), 0.0);
        let bad = OpticsParams { gamma_opt: 0.0, ..Default::default() };
        assert!(validate_optics(&bad).has_errors());
    }

    #[test]
    fn baseline_calibration_keeps_sign() {
        let p = SpinParams { p0n: 0.2, ..Default::default() }.with_baseline_gain(42.0);
        assert_relative_eq!(p.baseline_gain(), 42.0, max_relative = 1e-12);
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Bundle {
        spin: SpinParams,
        drive: DriveConfig,
        test: TestField,
        optics: OpticsParams,
    }

    proptest! {
        #[test]
        fn config_round_trips_bit_for_bit(
            t2n in 1e-3f64..1e3, p0n in -1.0f64..1.0, kappa0 in 1.0f64..1e3,
            b0 in -2e3f64..2e3, b_ac in 0.0f64..2e3, nu_ac in 1e-3f64..100.0,
            b_y in 0.0f64..1.0, nu in 0.0f64..50.0,
        ) {
            let bundle = Bundle {
                spin: SpinParams { t2n, p0n, kappa0, ..Default::default() },
                drive: DriveConfig { b0, b_ac, nu_ac },
                test: TestField { b_y, nu },
                optics: OpticsParams::default(),
            };
            let text = toml::to_string(&bundle).unwrap();
            let back: Bundle = toml::from_str(&text).unwrap();
            prop_assert_eq!(back, bundle);
        }

        #[test]
        fn derived_quantities_track_fields(gamma_n in 1e-3f64..1.0, b0 in 1.0f64..2e3, b_ac in 0.0f64..2e3, nu_ac in 0.1f64..50.0) {
            let d = DriveConfig { b0, b_ac, nu_ac };
            prop_assert_eq!(d.larmor(gamma_n), gamma_n * b0);
            prop_assert_eq!(d.modulation_index(gamma_n), gamma_n * b_ac / nu_ac);
        }
    }
}
