use num_bigint::{BigInt, RandBigInt};
use num_traits::One;

use super::{CipherParams, Rng};

/// Secret key `sk ∈ Z_q^N`, stored in extended form `s = [1, sk]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    s: Vec<BigInt>,
}

impl SecretKey {
    /// Builds a key from its `N` components, reducing them into `[-q/2, q/2)`.
    pub fn from_components(params: &CipherParams, sk: &[BigInt]) -> Self {
        let mut s = Vec::with_capacity(sk.len() + 1);
        s.push(BigInt::one());
        s.extend(sk.iter().map(|c| params.reduce(c)));
        Self { s }
    }

    /// The `N` key components.
    pub fn sk(&self) -> &[BigInt] {
        &self.s[1..]
    }

    /// Extended key `[1, sk]`.
    pub fn extended(&self) -> &[BigInt] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `sk` uniformly from `Z_q^N`.
pub fn keygen(params: &CipherParams, rng: &mut Rng) -> SecretKey {
    let lo = -params.half_q().clone();
    let hi = params.q() - params.half_q();
    let sk: Vec<BigInt> = (0..params.key_length())
        .map(|_| rng.gen_bigint_range(&lo, &hi))
        .collect();
    SecretKey::from_components(params, &sk)
}
