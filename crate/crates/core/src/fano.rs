//! Fano line shapes and the multi-line fit of observed power response.
//!
//! The observed response of one amplified line, squared, is the Fano profile
//! `[(x − η)² + 1] / (1 + x²)` with `x = 2π(ν − ν_k)T2n`, asymmetry
//! `q = −η` and width `Γ = 1/(π T2n)`. Several lines add coherently:
//!
//! ```text
//! f(ν) = (Σ_k A_k)² + (Σ_k B_k + 1)² + c
//! A_k = η_k / (1 + y_k²),  B_k = η_k y_k / (1 + y_k²),  y_k = 2π(ν_k − ν)T2n
//! ```

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoParams {
    pub q: f64,
    pub e_r: f64,
    pub gamma: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

/// `σ_a (q + ε)² / (1 + ε²) + σ_b` with `ε = (e − e_r)/(Γ/2)`.
pub fn fano_profile(e: f64, p: &FanoParams) -> f64 {
    let eps = (e - p.e_r) / (0.5 * p.gamma);
    p.sigma_a * (p.q + eps).powi(2) / (1.0 + eps * eps) + p.sigma_b
}

/// Squared observed response of a single line.
pub fn eta_squared_profile(nu: f64, eta_k0: f64, nu_k: f64, t2n: f64) -> f64 {
    let x = TWO_PI * (nu - nu_k) * t2n;
    ((x - eta_k0).powi(2) + 1.0) / (1.0 + x * x)
}

/// Fano asymmetry `q = −η_{k,0}`.
pub fn fano_parameter(eta_k0: f64) -> f64 {
    -eta_k0
}

/// Fano width `Γ = 1/(π T2n)`, Hz.
pub fn fano_width(t2n: f64) -> f64 {
    1.0 / (PI * t2n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedLine {
    pub k: i64,
    pub eta_k0: f64,
    pub nu_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoFitResult {
    pub lines: Vec<FittedLine>,
    pub t2n: f64,
    /// Additive offset, present when it was fitted.
    pub offset: Option<f64>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FanoFitResult {
    /// Model value at `nu`.
    pub fn evaluate(&self, nu: f64) -> f64 {
        let model = MultiLine::from_result(self);
        model.value(nu)
    }

    pub fn fano_parameters(&self) -> Vec<f64> {
        self.lines.iter().map(|l| fano_parameter(l.eta_k0)).collect()
    }
}

/// Parameter layout `[η_1..η_n, ν_1..ν_n, T2n, (c)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLine {
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
    pub t2n: f64,
    pub offset: Option<f64>,
}

impl MultiLine {
    pub fn from_result(r: &FanoFitResult) -> Self {
        MultiLine {
            eta: r.lines.iter().map(|l| l.eta_k0).collect(),
            nu: r.lines.iter().map(|l| l.nu_k).collect(),
            t2n: r.t2n,
            offset: r.offset,
        }
    }

    fn n_params(&self) -> usize {
        2 * self.eta.len() + 1 + usize::from(self.offset.is_some())
    }

    fn to_vector(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.eta.iter().chain(&self.nu).copied().collect();
        v.push(self.t2n);
        if let Some(c) = self.offset {
            v.push(c);
        }
        DVector::from_vec(v)
    }

    fn with_vector(&self, p: &DVector<f64>) -> Self {
        let n = self.eta.len();
        MultiLine {
            eta: p.rows(0, n).iter().copied().collect(),
            nu: p.rows(n, n).iter().copied().collect(),
            t2n: p[2 * n],
            offset: self.offset.map(|_| p[2 * n + 1]),
        }
    }

    pub fn value(&self, nu: f64) -> f64 {
        let (mut sa, mut sb) = (0.0, 0.0);
        for (&eta, &nu_k) in self.eta.iter().zip(&self.nu) {
            let y = TWO_PI * (nu_k - nu) * self.t2n;
            let d = 1.0 + y * y;
            sa += eta / d;
            sb += eta * y / d;
        }
        sa * sa + (sb + 1.0).powi(2) + self.offset.unwrap_or(0.0)
    }

    /// Value and gradient with respect to the parameter vector.
    fn value_and_gradient(&self, nu: f64, grad: &mut [f64]) -> f64 {
        let n = self.eta.len();
        let t2 = self.t2n;
        let (mut sa, mut sb) = (0.0, 0.0);
        for (&eta, &nu_k) in self.eta.iter().zip(&self.nu) {
            let y = TWO_PI * (nu_k - nu) * t2;
            let d = 1.0 + y * y;
            sa += eta / d;
            sb += eta * y / d;
        }
        let (ga, gb) = (2.0 * sa, 2.0 * (sb + 1.0));
        let mut d_t2 = 0.0;
        for (i, (&eta, &nu_k)) in self.eta.iter().zip(&self.nu).enumerate() {
            let y = TWO_PI * (nu_k - nu) * t2;
            let d = 1.0 + y * y;
            grad[i] = (ga + gb * y) / d;
            let da_dy = -2.0 * eta * y / (d * d);
            let db_dy = eta * (1.0 - y * y) / (d * d);
            let df_dy = ga * da_dy + gb * db_dy;
            grad[n + i] = df_dy * TWO_PI * t2;
            d_t2 += df_dy * y / t2;
        }
        grad[2 * n] = d_t2;
        if self.offset.is_some() {
            grad[2 * n + 1] = 1.0;
        }
        sa * sa + (sb + 1.0).powi(2) + self.offset.unwrap_or(0.0)
    }
}

pub mod lm {
    //! Levenberg–Marquardt with Marquardt's diagonal scaling.

    use nalgebra::{DMatrix, DVector};

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Options {
        pub max_iterations: usize,
        pub initial_damping: f64,
        /// Relative step size below which the parameters are considered settled.
        pub step_tolerance: f64,
        /// Bound on `max_i |∂C/∂p_i| · |p_i|` with `C = ½ Σ r²`.
        pub gradient_tolerance: f64,
    }

    impl Default for Options {
        fn default() -> Self {
            Options { max_iterations: 500, initial_damping: 1e-3, step_tolerance: 1e-8, gradient_tolerance: 1e-8 }
        }
    }

    #[derive(Debug, Clone)]
    pub struct Outcome {
        pub params: DVector<f64>,
        /// `½ Σ r²` at `params`.
        pub cost: f64,
        pub iterations: usize,
        pub converged: bool,
        /// Cost after each accepted step, starting with the initial cost.
        pub cost_history: Vec<f64>,
    }

    fn scaled_gradient(g: &DVector<f64>, p: &DVector<f64>) -> f64 {
        g.iter().zip(p.iter()).map(|(gi, pi)| (gi * pi.abs().max(1e-12)).abs()).fold(0.0, f64::max)
    }

    /// Minimise `½ Σ r(p)²`; `eval` returns residuals and their Jacobian.
    pub fn minimize(
        p0: DVector<f64>,
        eval: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
        opts: &Options,
    ) -> Outcome {
        let mut p = p0;
        let (mut r, mut jac) = eval(&p);
        let mut cost = 0.5 * r.norm_squared();
        let mut history = vec![cost];
        let mut mu = opts.initial_damping;
        let mut last_rel_step = f64::INFINITY;
        let mut iterations = 0;

        while iterations < opts.max_iterations {
            let g = jac.transpose() * &r;
            if last_rel_step < opts.step_tolerance && scaled_gradient(&g, &p) < opts.gradient_tolerance {
                return Outcome { params: p, cost, iterations, converged: true, cost_history: history };
            }
            iterations += 1;
            let jtj = jac.transpose() * &jac;
            let diag = jtj.diagonal().map(|d| if d > 0.0 { d } else { 1.0 });
            let mut accepted = false;
            while mu < 1e20 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += mu * diag[i];
                }
                let Some(chol) = a.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let trial = &p + &step;
                let (tr, tj) = eval(&trial);
                let trial_cost = 0.5 * tr.norm_squared();
                if trial_cost.is_finite() && trial_cost <= cost {
                    last_rel_step =
                        step.iter().zip(trial.iter()).map(|(s, q)| s.abs() / q.abs().max(1e-12)).fold(0.0, f64::max);
                    p = trial;
                    r = tr;
                    jac = tj;
                    cost = trial_cost;
                    history.push(cost);
                    mu = (mu / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
                mu *= 10.0;
            }
            if !accepted {
                // no descent left at any damping: stationary to machine precision
                let g = jac.transpose() * &r;
                let converged = scaled_gradient(&g, &p) < opts.gradient_tolerance;
                return Outcome { params: p, cost, iterations, converged, cost_history: history };
            }
        }
        Outcome { params: p, cost, iterations, converged: false, cost_history: history }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub fit_offset: bool,
    pub lm: lm::Options,
    /// Minimum samples within `±3` linewidths of every line.
    pub min_points_per_line: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { fit_offset: false, lm: lm::Options::default(), min_points_per_line: 10 }
    }
}

fn check_coverage(data: &[(f64, f64)], init: &FanoFitResult, min_points: usize) -> Result<()> {
    if data.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::BadFitInput("data contain non-finite values".into()));
    }
    if !(init.t2n > 0.0) {
        return Err(Error::BadFitInput(format!("initial t2n must be positive, got {}", init.t2n)));
    }
    if init.lines.is_empty() {
        return Err(Error::BadFitInput("no lines to fit".into()));
    }
    let half = 3.0 * fano_width(init.t2n);
    for line in &init.lines {
        let count = data.iter().filter(|(nu, _)| (nu - line.nu_k).abs() <= half).count();
        if count < min_points {
            return Err(Error::BadFitInput(format!(
                "line k={} at {:.6} Hz has {count} samples within 3 linewidths, need {min_points}",
                line.k, line.nu_k
            )));
        }
    }
    Ok(())
}

fn parameter_name(i: usize, n: usize, lines: &[FittedLine]) -> String {
    if i < n {
        format!("eta_k0[k={}]", lines[i].k)
    } else if i < 2 * n {
        format!("nu_k[k={}]", lines[i - n].k)
    } else if i == 2 * n {
        "t2n".into()
    } else {
        "offset".into()
    }
}

/// Weighted least squares of the coherent multi-line model against
/// `(ν, response²)` data, residuals relative to the data.
pub fn fit_multiline(data: &[(f64, f64)], init: &FanoFitResult, opts: &FitOptions) -> Result<FanoFitResult> {
    check_coverage(data, init, opts.min_points_per_line)?;
    let mut start = MultiLine::from_result(init);
    start.offset = opts.fit_offset.then(|| init.offset.unwrap_or(0.0));
    let n = start.eta.len();
    let m = start.n_params();
    let weights: Vec<f64> = data.iter().map(|(_, y)| 1.0 / y.abs().max(1e-12)).collect();

    let eval = |p: &DVector<f64>| {
        let model = start.with_vector(p);
        let mut r = DVector::zeros(data.len());
        let mut jac = DMatrix::zeros(data.len(), m);
        let mut grad = vec![0.0; m];
        for (i, ((nu, y), w)) in data.iter().zip(&weights).enumerate() {
            let f = model.value_and_gradient(*nu, &mut grad);
            r[i] = (f - y) * w;
            for (j, g) in grad.iter().enumerate() {
                jac[(i, j)] = g * w;
            }
        }
        (r, jac)
    };

    let p0 = start.to_vector();
    let (_, j0) = eval(&p0);
    for j in 0..m {
        if j0.column(j).iter().all(|v| *v == 0.0) {
            return Err(Error::RankDeficient(parameter_name(j, n, &init.lines)));
        }
    }

    let out = lm::minimize(p0, eval, &opts.lm);
    let fitted = start.with_vector(&out.params);
    let lines = init
        .lines
        .iter()
        .zip(fitted.eta.iter().zip(&fitted.nu))
        .map(|(l, (&eta_k0, &nu_k))| FittedLine { k: l.k, eta_k0, nu_k })
        .collect();
    Ok(FanoFitResult {
        lines,
        t2n: fitted.t2n,
        offset: fitted.offset,
        residual_rms: (2.0 * out.cost / data.len() as f64).sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Starting point from the data alone: line positions from `comb`, `|η|`
/// from the peak height via `√(peak − 1)`, the sign of `η` from the side of
/// the dip (dip below the line means `η < 0`), `T2n` from the half-maximum
/// width of `f − 1` around the strongest line through `width = 1/(π T2n)`.
pub fn initial_guess(data: &[(f64, f64)], comb: &[(i64, f64)]) -> Result<FanoFitResult> {
    if data.len() < 3 || comb.is_empty() {
        return Err(Error::BadFitInput("need data and at least one comb line".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spacing = comb.windows(2).map(|w| (w[1].1 - w[0].1).abs()).fold(f64::INFINITY, f64::min);
    let half_window = if spacing.is_finite() { 0.5 * spacing } else { f64::INFINITY };

    let mut lines = Vec::with_capacity(comb.len());
    let mut strongest: Option<(f64, usize)> = None;
    for &(k, nu_k) in comb {
        let idx: Vec<usize> = (0..sorted.len()).filter(|&i| (sorted[i].0 - nu_k).abs() < half_window).collect();
        if idx.is_empty() {
            return Err(Error::BadFitInput(format!("no data near line k={k} at {nu_k} Hz")));
        }
        let i_max = *idx.iter().max_by(|&&a, &&b| sorted[a].1.total_cmp(&sorted[b].1)).unwrap();
        let i_min = *idx.iter().min_by(|&&a, &&b| sorted[a].1.total_cmp(&sorted[b].1)).unwrap();
        let peak = sorted[i_max].1;
        let magnitude = (peak - 1.0).max(0.0).sqrt();
        let sign = if sorted[i_min].0 < sorted[i_max].0 { -1.0 } else { 1.0 };
        lines.push(FittedLine { k, eta_k0: sign * magnitude, nu_k });
        if strongest.is_none_or(|(p, _)| peak > p) {
            strongest = Some((peak, i_max));
        }
    }

    let (peak, i_peak) = strongest.unwrap();
    let half = 1.0 + 0.5 * (peak - 1.0);
    let mut lo = i_peak;
    while lo > 0 && sorted[lo].1 > half {
        lo -= 1;
    }
    let mut hi = i_peak;
    while hi + 1 < sorted.len() && sorted[hi].1 > half {
        hi += 1;
    }
    let width = sorted[hi].0 - sorted[lo].0;
    if !(width > 0.0) {
        return Err(Error::BadFitInput("could not resolve a line width".into()));
    }
    Ok(FanoFitResult {
        lines,
        t2n: 1.0 / (PI * width),
        offset: None,
        residual_rms: f64::NAN,
        converged: false,
        iterations: 0,
    })
}

/// Synthetic squared response of `truth` on `grid`.
pub fn synthesize(truth: &FanoFitResult, grid: &[f64]) -> Vec<(f64, f64)> {
    let model = MultiLine::from_result(truth);
    grid.iter().map(|&nu| (nu, model.value(nu))).collect()
}

/// Refit `trials` noisy copies of `truth` (multiplicative Gaussian noise of
/// relative size `noise`), each from the data-derived initial guess. Trial
/// `i` uses the stream seeded with `seed + i`; results keep trial order.
pub fn monte_carlo_refits(
    truth: &FanoFitResult,
    grid: &[f64],
    noise: f64,
    trials: usize,
    seed: u64,
    opts: &FitOptions,
) -> Vec<Result<FanoFitResult>> {
    let clean = synthesize(truth, grid);
    let comb: Vec<(i64, f64)> = truth.lines.iter().map(|l| (l.k, l.nu_k)).collect();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let normal = Normal::new(0.0, noise).map_err(|e| Error::BadFitInput(e.to_string()))?;
            let noisy: Vec<(f64, f64)> =
                clean.iter().map(|&(nu, y)| (nu, y * (1.0 + normal.sample(&mut rng)))).collect();
            let init = initial_guess(&noisy, &comb)?;
            fit_multiline(&noisy, &init, opts)
        })
        .collect()
}
