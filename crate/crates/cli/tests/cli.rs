use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use floquet_core::specfun::bessel_j;
use floquet_core::SpinParams;

fn floquet(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floquet"))
        .args(args)
        .env("FLOQUET_OUT_DIR", out_root)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str], root: &Path) -> PathBuf {
    let out = floquet(args, root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().last().unwrap())
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn local_maxima(y: &[f64], floor: f64) -> usize {
    (1..y.len() - 1).filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > floor).count()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn profile_shows_seven_resonances() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(&["profile", "--set", "drive.b0=853", "--set", "drive.b_ac=397"], root.path());
    let (header, rows) = read_csv(&dir.join("profile.csv"));
    assert_eq!(header, ["nu_hz", "eta", "eta_coherent", "response_with_direct"]);
    let eta: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let max = eta.iter().cloned().fold(0.0, f64::max);
    assert_eq!(local_maxima(&eta, 0.1 * max), 7);
    let (_, lines) = read_csv(&dir.join("lines.csv"));
    assert_eq!(lines.len(), 7);

    let m = manifest(&dir);
    assert_eq!(m["command"], "profile");
    assert_eq!(m["status"], "ok");
    assert!((m["config"]["derived"]["u"].as_f64().unwrap() - 3.118).abs() < 1e-3);
    for o in m["outputs"].as_array().unwrap() {
        assert!(dir.join(o.as_str().unwrap()).exists());
    }
}

#[test]
fn undriven_profile_has_one_line() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(&["profile", "--set", "drive.u=0"], root.path());
    let (_, rows) = read_csv(&dir.join("profile.csv"));
    let eta: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert_eq!(local_maxima(&eta, 0.0), 1);
    let (_, lines) = read_csv(&dir.join("lines.csv"));
    assert_eq!(lines.len(), 1);
}

#[test]
fn profile_step_override_is_exact() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(&["profile", "--step", "0.002", "--set", "drive.u=0"], root.path());
    let (_, rows) = read_csv(&dir.join("profile.csv"));
    for w in rows.windows(2) {
        // values carry 12 significant digits
        assert!(((w[1][0] - w[0][0]) - 0.002).abs() < 2e-10);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let root = tempfile::tempdir().unwrap();
    for (cmd, file) in [("profile", "profile.csv"), ("verify", "verify.json")] {
        let a = run_ok(&[cmd], root.path());
        let b = run_ok(&[cmd, "--jobs", "3"], root.path());
        assert_ne!(a, b);
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap());
    }
}

#[test]
fn simulate_reports_seven_sidebands() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(&["simulate", "--series", "none"], root.path());
    let (header, rows) = read_csv(&dir.join("sidebands.csv"));
    assert_eq!(header, ["l", "line_hz", "nu_hz", "amplitude_nt", "eta", "eta_theory"]);
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert!((r[4] - r[5]).abs() / r[5] < 0.01, "{r:?}");
    }
    assert!(dir.join("spectrum.csv").exists());
    assert_eq!(manifest(&dir)["status"], "ok");
}

#[test]
fn simulate_without_test_field_has_empty_table() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(
        &["simulate", "--set", "test.b_y=0", "--set", "sim.duration=40", "--set", "sim.transient_skip=10"],
        root.path(),
    );
    let (_, rows) = read_csv(&dir.join("sidebands.csv"));
    assert!(rows.is_empty());
    let series = fs::File::open(dir.join("series.bin")).unwrap();
    let s = floquet_core::bloch_sim::TimeSeries::read_binary(series).unwrap();
    assert!(s.channel("by_eff").unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn step_rule_violation_is_an_input_error() {
    let root = tempfile::tempdir().unwrap();
    let out = floquet(&["simulate", "--set", "sim.dt=0.01"], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time step"));
}

#[test]
fn invalid_config_names_the_field() {
    let root = tempfile::tempdir().unwrap();
    let out = floquet(&["profile", "--set", "spin.t2n=-1"], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spin.t2n"));

    let cfg = root.path().join("bad.toml");
    fs::write(&cfg, "[drive]\nnu_ac = -2.0\n").unwrap();
    let out = floquet(&["profile", "--config", cfg.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("drive.nu_ac"));
}

#[test]
fn config_file_and_flags_layer() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.toml");
    fs::write(&cfg, "[spin]\nt2n = 10.0\nt1n = 10.0\n").unwrap();
    let c = cfg.to_str().unwrap();
    let dir = run_ok(&["profile", "--config", c, "--set", "spin.t2n=5"], root.path());
    assert_eq!(manifest(&dir)["config"]["spin"]["t2n"], 5.0);
    let dir = run_ok(&["profile", "--config", c], root.path());
    assert_eq!(manifest(&dir)["config"]["spin"]["t2n"], 10.0);
}

#[test]
fn sweep_follows_bessel_products() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(
        &[
            "sweep", "--axis", "u", "--from", "0", "--to", "8", "--steps", "81", "--pair", "1,0", "--pair", "1,-1",
            "--pair", "1,1",
        ],
        root.path(),
    );
    let (header, rows) = read_csv(&dir.join("sweep.csv"));
    assert_eq!(header, ["u", "eta_1_0", "eta_1_-1", "eta_1_1", "response"]);
    assert_eq!(rows.len(), 81);
    let g = SpinParams::default().baseline_gain();
    for r in &rows {
        let u = r[0];
        let j = |n| bessel_j(n, u).unwrap();
        assert!((r[1] - g * j(1) * j(1)).abs() < 1e-9);
        assert!((r[2] - g * j(0) * j(1)).abs() < 1e-9);
        assert!((r[3] - g * j(2) * j(1)).abs() < 1e-9);
    }
}

#[test]
fn degenerate_sweep_has_one_row() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(&["sweep", "--axis", "nu", "--from", "11.539", "--to", "11.539", "--steps", "1"], root.path());
    let (_, rows) = read_csv(&dir.join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    let out = floquet(&["sweep", "--axis", "u", "--from", "0", "--to", "1", "--steps", "1"], root.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn deamplification_sweep_dips_near_three_and_a_half() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_ok(
        &[
            "sweep",
            "--axis",
            "u",
            "--from",
            "3.44",
            "--to",
            "3.66",
            "--steps",
            "221",
            "--set",
            "drive.nu_ac=13",
            "--set",
            "test.nu=2.971",
        ],
        root.path(),
    );
    let (_, rows) = read_csv(&dir.join("sweep.csv"));
    let best = rows.iter().min_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert!((best[0] - 3.50).abs() < 0.02, "{best:?}");
    assert!(best[2] < 1.0);
}

fn reference_fit_csv(path: &Path) {
    let etas = [-12.47, -21.86, -9.574, -8.532, -7.219, -18.71, -8.121];
    let t2 = 34.05;
    let nus: Vec<f64> = (0..7).map(|i| 5.539 + 1.5 * i as f64).collect();
    let step = 3f64.sqrt() / (std::f64::consts::PI * t2) / 20.0;
    let mut text = String::from("nu_hz,response2\n");
    for &center in &nus {
        for i in -200..=200 {
            let nu = center + i as f64 * step;
            let (mut a, mut b) = (0.0, 0.0);
            for (e, n) in etas.iter().zip(&nus) {
                let y = 2.0 * std::f64::consts::PI * (n - nu) * t2;
                a += e / (1.0 + y * y);
                b += e * y / (1.0 + y * y);
            }
            text.push_str(&format!("{nu:.15e},{:.15e}\n", a * a + (b + 1.0) * (b + 1.0)));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn fit_recovers_reference_parameters() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("t.csv");
    reference_fit_csv(&data);
    let dir = run_ok(&["fit", data.to_str().unwrap()], root.path());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(v["converged"], true);
    assert!((v["t2n"].as_f64().unwrap() - 34.05).abs() / 34.05 < 1e-6);
    assert!((v["lines"][1]["eta_k0"].as_f64().unwrap() + 21.86).abs() < 1e-6);
    assert!((v["fano_q"][1].as_f64().unwrap() - 21.86).abs() < 1e-6);
    let (header, rows) = read_csv(&dir.join("fit_curve.csv"));
    assert_eq!(header, ["nu_hz", "data", "model"]);
    assert_eq!(rows.len(), 7 * 401);
}

#[test]
fn fit_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("t.csv");
    reference_fit_csv(&data);
    let d = data.to_str().unwrap();
    let out = floquet(&["fit", d, "--set", "fit.max_iterations=1"], root.path());
    assert_eq!(out.status.code(), Some(2));
    let dir = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert_eq!(manifest(&dir)["status"], "not_converged");

    let bad = root.path().join("bad.csv");
    fs::write(&bad, "nu_hz,response2\n5.5,1.0\n5.6,abc\n").unwrap();
    let out = floquet(&["fit", bad.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3:"), "{err}");

    fs::write(&bad, "nu_hz,response2\n5.5,1.0\n5.6,1.0,7\n").unwrap();
    let out = floquet(&["fit", bad.to_str().unwrap()], root.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:"));
}

#[test]
fn verify_passes_and_detects_corruption() {
    let root = tempfile::tempdir().unwrap();
    let out = floquet(&["verify"], root.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);

    let out = floquet(&["verify", "--corrupt-t2n", "1.05"], root.path());
    assert_eq!(out.status.code(), Some(3));
    let dir = PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().last().unwrap());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
    let checks = v["checks"].as_array().unwrap();
    let failed: Vec<&str> =
        checks.iter().filter(|c| c["passed"] == false).map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(failed, ["fwhm"]);
}

#[test]
fn explicit_run_dir_must_be_empty() {
    let root = tempfile::tempdir().unwrap();
    let target = root.path().join("mine");
    let t = target.to_str().unwrap();
    run_ok(&["profile", "--run-dir", t], root.path());
    assert!(target.join("manifest.json").exists());
    let out = floquet(&["profile", "--run-dir", t], root.path());
    assert_eq!(out.status.code(), Some(1));
}
