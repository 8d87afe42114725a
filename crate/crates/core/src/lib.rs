//! Spin amplification under periodic driving.
//!
//! A periodically driven noble-gas spin ensemble, read out by a co-located
//! alkali magnetometer, amplifies transverse test fields whose frequency sits
//! on one of the comb lines `nu0 + k * nu_ac`. This crate provides:
//!
//! * [`specfun`]: integer-order Bessel functions and Jacobi–Anger weights,
//! * [`floquet`]: quasi-energies, dressed-state coefficients and the resonance comb,
//! * [`steady_state`]: the closed-form linear response, amplification factors,
//!   profiles, the power sum rule and the Fano-inclusive observed response,
//! * [`bloch_sim`]: a fixed-step RK4 integrator of the Bloch equations used as a
//!   brute-force oracle, plus the optical-rotation readout,
//! * [`spectrum`]: amplitude spectra, sideband peak extraction and measured gains,
//! * [`fano`]: Fano line shapes and the multi-line Levenberg–Marquardt fit.
//!
//! Unit convention: every frequency is cyclic (Hz), every gyromagnetic ratio is
//! in Hz/nT, every field is in nT. Angular factors `2π` are written out
//! explicitly where an equation needs them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch_sim;
pub mod domain;
pub mod error;
pub mod fano;
pub mod floquet;
pub mod output;
pub mod specfun;
pub mod spectrum;
pub mod steady_state;

pub use domain::{DriveConfig, OpticsParams, SpinParams, TestField, ValidationReport};
pub use error::{Error, Result};

use std::f64::consts::PI;

/// `2π`, used for every cyclic-to-angular conversion.
pub const TWO_PI: f64 = 2.0 * PI;
