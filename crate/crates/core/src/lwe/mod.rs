//! LWE cryptosystem over `Z_q` with `q = L p` a power of ten.
//!
//! [`encrypt`] produces `[(-A sk + L m + e) mod q, A]`; [`decrypt`] rounds
//! `(c · [1, sk]) mod q` by `L`. Ciphertexts add entry-wise. Multiplication
//! uses a second encoding of the multiplier, `m1 R + O` with the base-10
//! gadget `R = [10^0 .. 10^(d-1)]^T ⊗ I`, applied to the digit decomposition
//! of the multiplicand.
//!
//! All residues are arbitrary-precision integers kept centered in `[-q/2, q/2)`.

mod budget;
mod cipher;
mod gaussian;
mod key;
mod multiplier;
mod params;
mod rng;
pub mod serial;

use num_bigint::BigInt;
use num_integer::Integer;
use thiserror::Error;

pub use budget::{error_budget, mult_noise_bound};
pub use cipher::{add_ct, decrypt, encrypt, encrypt_with, mul_public, Ciphertext};
pub use gaussian::DiscreteGaussian;
pub use key::{keygen, SecretKey};
pub use multiplier::{decompose, encrypt_multiplier, mult_ct, MultiplierCiphertext};
pub use params::{CipherConfig, CipherParams, MAX_P_EXP};
pub use rng::Rng;

/// Plaintext message type. `p` is capped at `10^36`, so every `|m| < p/2` fits.
pub type Plaintext = i128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LweError {
    #[error("message {value} outside plaintext space (|m| must be < {half_p})")]
    MessageOutOfRange { value: i128, half_p: i128 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid cipher parameters: {0}")]
    InvalidParams(String),
}

/// `a - floor((a + q/2) / q) q`, the centered residue of `a` in `[-q/2, q/2)`.
pub fn mod_centered(a: &BigInt, q: &BigInt) -> BigInt {
    let half = q / 2u32;
    let shifted: BigInt = a + &half;
    shifted.mod_floor(q) - half
}
