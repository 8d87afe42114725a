//! Bessel functions of the first kind for integer order and the Jacobi–Anger
//! weights `J_k(u)` that set the sideband structure of a frequency-modulated
//! precession.
//!
//! Values are produced by Miller's backward recurrence, normalised with the
//! positive-definite identity `J_0² + 2 Σ_{k≥1} J_k² = 1`. The sign of the
//! normalisation is fixed by `J_0 + 2 Σ J_{2k} = 1`.

use crate::error::{Error, Result};

/// Integer Bessel order. Negative orders resolve through `J_{-k} = (-1)^k J_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BesselOrder(pub i32);

impl From<i32> for BesselOrder {
    fn from(k: i32) -> Self {
        BesselOrder(k)
    }
}

/// Default truncation of a Jacobi–Anger sum at modulation index `u`:
/// `max(20, ceil(|u|) + 20)`. Bessel weights fall off super-exponentially once
/// the order exceeds the argument.
pub fn default_truncation(u: f64) -> usize {
    let by_arg = if u.is_finite() { u.abs().ceil() as usize + 20 } else { 20 };
    by_arg.max(20)
}

const RESCALE_ABOVE: f64 = 1e100;
const RESCALE_BY: f64 = 1e-100;

/// `J_0(x) ..= J_{n_max}(x)` in one backward sweep.
///
/// Non-finite `x` yields a vector of NaN; use [`bessel_j`] when the argument
/// has not been validated.
pub fn bessel_sequence(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if !x.is_finite() {
        out.iter_mut().for_each(|v| *v = f64::NAN);
        return out;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = n_max.max(ax.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    // j_{k+1}, j_k
    let mut above = 0.0_f64;
    let mut current = 1e-30_f64;
    let mut sum_sq = 0.0_f64;
    let mut even_sum = 0.0_f64;
    let two_over_x = 2.0 / ax;

    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = current;
        }
        sum_sq += 2.0 * current * current;
        if k % 2 == 0 {
            even_sum += 2.0 * current;
        }
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            above *= RESCALE_BY;
            sum_sq *= RESCALE_BY * RESCALE_BY;
            even_sum *= RESCALE_BY;
            let lo = k.min(n_max + 1);
            for v in out[lo..].iter_mut() {
                *v *= RESCALE_BY;
            }
        }
    }
    out[0] = current;
    sum_sq += current * current;
    even_sum += current;

    let norm = sum_sq.sqrt().copysign(even_sum);
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_k(x)` for any integer order.
pub fn bessel_j(order: impl Into<BesselOrder>, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    let k = order.into().0;
    let n = k.unsigned_abs() as usize;
    let v = bessel_sequence(x, n)[n];
    Ok(if k < 0 && n % 2 == 1 { -v } else { v })
}

/// Table of `J_k(u)` for `k ∈ [-k_max, k_max]`; orders outside the table read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiAnger {
    u: f64,
    k_max: usize,
    positive: Vec<f64>,
}

impl JacobiAnger {
    pub fn new(u: f64, k_max: usize) -> Self {
        JacobiAnger { u, k_max, positive: bessel_sequence(u, k_max) }
    }

    /// Table with the default truncation for `u`.
    pub fn with_default_truncation(u: f64) -> Self {
        Self::new(u, default_truncation(u))
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `J_k(u)`, zero beyond the truncation.
    #[inline]
    pub fn get(&self, k: i64) -> f64 {
        let n = k.unsigned_abs() as usize;
        if n > self.k_max {
            return 0.0;
        }
        let v = self.positive[n];
        if k < 0 && n % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// Orders `-k_max ..= k_max`.
    pub fn orders(&self) -> impl Iterator<Item = i64> {
        let m = self.k_max as i64;
        -m..=m
    }

    /// Coefficients ordered from `k = -k_max` to `k = k_max`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.orders().map(|k| self.get(k)).collect()
    }
}

/// `[J_{-k_max}(u), …, J_0(u), …, J_{k_max}(u)]`.
pub fn jacobi_anger_coeffs(u: f64, k_max: usize) -> Vec<f64> {
    JacobiAnger::new(u, k_max).to_vec()
}
