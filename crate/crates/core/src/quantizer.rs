//! Scaled quantization of real signals into integer plaintexts.
//!
//! Scales are exact powers of ten and are carried as exponents ([`Scale`]).
//! The logarithmic quantizer picks `S = 10^(sp - floor(log10 |v|) - 1)` so the
//! quantized value keeps `sp` significant figures regardless of magnitude; the
//! uniform quantizer uses a fixed `S`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error("logarithmic scale undefined for zero input")]
    ZeroInput,
    #[error("quantized value {value} exceeds plaintext space (|m| must be < {limit})")]
    PlaintextOverflow { value: f64, limit: i128 },
    #[error("non-finite input {0}")]
    NonFinite(f64),
}

/// A power of ten `10^exp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scale(pub i32);

impl Scale {
    pub const ONE: Scale = Scale(0);

    pub fn exp(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        10f64.powi(self.0)
    }

    /// `10^a * 10^b`.
    pub fn compose(self, other: Scale) -> Scale {
        Scale(self.0 + other.0)
    }

    /// `x * S`, dividing by `10^-exp` for negative exponents to stay exact on
    /// decimal inputs.
    pub fn apply(self, x: f64) -> f64 {
        if self.0 >= 0 {
            x * 10f64.powi(self.0)
        } else {
            x / 10f64.powi(-self.0)
        }
    }

    /// `x / S`.
    pub fn remove(self, x: f64) -> f64 {
        Scale(-self.0).apply(x)
    }
}

/// Logarithmic quantizer keeping `sp` significant figures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogQuantizerSpec {
    pub sp: u32,
}

/// Uniform quantizer with fixed scale `S = 10^scale_exp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformQuantizerSpec {
    pub scale: Scale,
}

/// `floor(log10 |v|)`, corrected against floating-point error at decade edges.
fn decade(v: f64) -> i32 {
    let a = v.abs();
    let mut k = a.log10().floor() as i32;
    if Scale(k).value() > a {
        k -= 1;
    } else if Scale(k + 1).value() <= a {
        k += 1;
    }
    k
}

/// `S = 10^(sp - floor(log10 |v|) - 1)`.
pub fn log_scale_factor(v: f64, sp: u32) -> Result<Scale, QuantizerError> {
    if !v.is_finite() {
        return Err(QuantizerError::NonFinite(v));
    }
    if v == 0.0 {
        return Err(QuantizerError::ZeroInput);
    }
    Ok(Scale(sp as i32 - decade(v) - 1))
}

/// `(⌈S v⌋, S)` with the logarithmic scale; zero maps to `(0, 1)`.
pub fn quantize_log(v: f64, sp: u32) -> (i128, Scale) {
    match log_scale_factor(v, sp) {
        Ok(scale) => (scale.apply(v).round() as i128, scale),
        Err(_) => (0, Scale::ONE),
    }
}

/// Quantizes with a caller-chosen scale (e.g. a scale shared by several signals).
pub fn quantize_with(v: f64, scale: Scale) -> i128 {
    scale.apply(v).round() as i128
}

/// `m / S`.
pub fn dequantize(m: i128, scale: Scale) -> f64 {
    scale.remove(m as f64)
}

/// `⌈S v⌋`, rejecting results outside the open interval `(-limit, limit)`.
pub fn quantize_uniform(v: f64, spec: UniformQuantizerSpec, limit: i128) -> Result<i128, QuantizerError> {
    if !v.is_finite() {
        return Err(QuantizerError::NonFinite(v));
    }
    let scaled = spec.scale.apply(v).round();
    if scaled.abs() >= limit as f64 {
        return Err(QuantizerError::PlaintextOverflow { value: scaled, limit });
    }
    Ok(scaled as i128)
}

/// Conservative plaintext-space lower bound
/// `prod_i 10^(2 sp_i) + 2 sum_j 10^(sp_j)` for the multiplied and added signals.
pub fn min_plaintext_bound(mult_sps: &[u32], add_sps: &[u32]) -> BigUint {
    let ten = BigUint::from(10u32);
    let product = mult_sps.iter().fold(BigUint::one(), |acc, &sp| {
        acc * num_traits::pow(ten.clone(), 2 * sp as usize)
    });
    let sum = add_sps.iter().fold(BigUint::zero(), |acc, &sp| {
        acc + num_traits::pow(ten.clone(), sp as usize)
    });
    product + sum * 2u32
}

/// Smallest exponent `e` with `10^e > bound`.
pub fn next_power_of_ten_above(bound: &BigUint) -> u32 {
    let digits = bound.to_string().len() as u32;
    // 10^(digits-1) <= bound < 10^digits
    digits
}
