use floquet_core::bloch_sim::{simulate, spectral_window, SimConfig, TimeSeries};
use floquet_core::floquet::{CombLine, ResonanceComb};
use floquet_core::specfun::default_truncation;
use floquet_core::spectrum::{amplitude_spectrum, measure_amplification};
use floquet_core::steady_state::{amplification_on_resonance, real_tone, sideband_phasors, ResponseModel};
use floquet_core::{DriveConfig, SpinParams, TestField};

const U: f64 = 3.12;
const NU_AC: f64 = 1.5;
const NU_TEST: f64 = 11.539;
const MEASURED_RATIOS: [f64; 4] = [1.0, 0.916, 1.480, 0.987];

fn params() -> SpinParams {
    SpinParams { t2n: 2.0, t1n: 2.0, ..SpinParams::default() }
}

fn drive(p: &SpinParams) -> DriveConfig {
    DriveConfig::from_frequencies(p.gamma_n, 10.039, NU_AC, U)
}

fn sidebands() -> ResonanceComb {
    ResonanceComb {
        nu0: NU_TEST,
        nu_ac: NU_AC,
        lines: (-3..=3).map(|l| CombLine { k: l, frequency: NU_TEST + l as f64 * NU_AC }).collect(),
        dropped: vec![],
    }
}

fn settled_window() -> TimeSeries {
    let p = params();
    let sim = SimConfig { duration: 20.0, transient_skip: 10.0, ..SimConfig::default() };
    let series = simulate(&p, &drive(&p), &TestField { b_y: 1e-3, nu: NU_TEST }, &sim).unwrap();
    let settled = series.after(sim.transient_skip);
    let mut freqs = sidebands().frequencies();
    freqs.push(NU_AC);
    let available = settled.len() as f64 * settled.dt;
    let (n, mismatch) = spectral_window(&freqs, settled.dt, 4.0, available).unwrap();
    assert!(mismatch <= 0.01, "window mismatch {mismatch}");
    settled.truncated(n)
}

/// Closed-form `|B_eff,y| / B_y` of the real tone at `frequency`.
fn theory(frequency: f64) -> f64 {
    let p = params();
    let k = default_truncation(U);
    let phasors = sideband_phasors(U, NU_TEST, &p, &drive(&p), ResponseModel::Full, k, k);
    real_tone(&phasors, frequency).py.amplitude() * p.coupling() * p.m_n
}

#[test]
fn simulated_sidebands_match_closed_form() {
    let window = settled_window();
    let reference = amplitude_spectrum(&window, "by_test").unwrap();
    let signal = amplitude_spectrum(&window, "by_eff").unwrap();
    let comb = sidebands();
    let gains = measure_amplification(&signal, &reference, &comb, 2.0 * signal.df).unwrap();
    assert_eq!(gains.iter().map(|g| g.k).collect::<Vec<_>>(), (-3..=3).collect::<Vec<_>>());
    for (g, line) in gains.iter().zip(&comb.lines) {
        let eta = g.eta.unwrap_or_else(|| panic!("sideband l = {} missing", g.k));
        let expected = theory(line.frequency);
        assert!((eta / expected - 1.0).abs() < 0.03, "l = {}: {eta} vs {expected}", g.k);
        assert!((g.nu_hz - line.frequency).abs() <= signal.df);
    }
}

#[test]
fn sideband_ratios_follow_bessel_products() {
    let window = settled_window();
    let reference = amplitude_spectrum(&window, "by_test").unwrap();
    let signal = amplitude_spectrum(&window, "by_eff").unwrap();
    let gains = measure_amplification(&signal, &reference, &sidebands(), 2.0 * signal.df).unwrap();
    let eta = |l: i64| gains.iter().find(|g| g.k == l).and_then(|g| g.eta).unwrap();
    let p = params();
    let on_resonance = |l: i64| amplification_on_resonance(1, l, U, &p).abs();
    let mut report = Vec::new();
    for (i, l) in (-1..=2).enumerate() {
        let measured = eta(l) / eta(-1);
        let expected = on_resonance(l) / on_resonance(-1);
        assert!((measured / expected - 1.0).abs() < 0.03, "l = {l}: {measured} vs {expected}");
        report
            .push(format!("l={l:+} simulated {measured:.3} closed form {expected:.3} bench {:.3}", MEASURED_RATIOS[i]));
    }
    println!("{}", report.join("\n"));
}

#[test]
fn gain_of_reference_against_itself_is_unity() {
    let window = settled_window();
    let reference = amplitude_spectrum(&window, "by_test").unwrap();
    let comb = ResonanceComb {
        nu0: NU_TEST,
        nu_ac: NU_AC,
        lines: vec![CombLine { k: 0, frequency: NU_TEST }],
        dropped: vec![],
    };
    let gains = measure_amplification(&reference, &reference, &comb, 2.0 * reference.df).unwrap();
    assert!((gains[0].eta.unwrap() - 1.0).abs() < 1e-12);

    let mut scaled = reference.clone();
    scaled.bins.iter_mut().for_each(|b| b.amplitude *= 7.0);
    let gains = measure_amplification(&scaled, &reference, &comb, 2.0 * reference.df).unwrap();
    assert!((gains[0].eta.unwrap() - 7.0).abs() < 1e-11);
}
