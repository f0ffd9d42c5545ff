//! Exact (error-function) GeLU and its first two derivatives.
//!
//! `gelu(x) = x Φ(x)` where `Φ` is the standard normal CDF. The tanh
//! approximation is not used: second-order Lie terms need the exact `φ''`.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
/// 1 / sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Value and first two derivatives of GeLU at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationTriple {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

#[inline]
pub fn gelu_unchecked(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_prime_unchecked(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

#[inline]
pub fn gelu_second_unchecked(x: f64) -> f64 {
    normal_pdf(x) * (2.0 - x * x)
}

/// `(gelu(x), gelu'(x))` sharing one CDF and one density evaluation.
#[inline]
pub fn gelu_and_prime(x: f64) -> (f64, f64) {
    let cdf = normal_cdf(x);
    (x * cdf, cdf + x * normal_pdf(x))
}

/// `(gelu'(x), gelu''(x))` sharing one CDF and one density evaluation.
#[inline]
pub fn gelu_prime_and_second(x: f64) -> (f64, f64) {
    let pdf = normal_pdf(x);
    (normal_cdf(x) + x * pdf, pdf * (2.0 - x * x))
}

fn finite(op: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { op, value: x })
    }
}

pub fn gelu(x: f64) -> Result<f64> {
    finite("gelu", x).map(gelu_unchecked)
}

pub fn gelu_prime(x: f64) -> Result<f64> {
    finite("gelu_prime", x).map(gelu_prime_unchecked)
}

pub fn gelu_second(x: f64) -> Result<f64> {
    finite("gelu_second", x).map(gelu_second_unchecked)
}

pub fn triple(x: f64) -> Result<ActivationTriple> {
    let x = finite("gelu", x)?;
    let cdf = normal_cdf(x);
    let pdf = normal_pdf(x);
    Ok(ActivationTriple {
        value: x * cdf,
        first: cdf + x * pdf,
        second: pdf * (2.0 - x * x),
    })
}
