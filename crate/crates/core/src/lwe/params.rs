//! Cryptosystem configuration.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::LweError;

/// Largest supported plaintext exponent; plaintexts are carried as `i128`.
pub const MAX_P_EXP: u32 = 36;

/// Serializable form of [`CipherParams`]: only the free parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CipherConfig {
    /// `p = 10^p_exp`.
    pub p_exp: u32,
    /// `L = 10^l_exp`.
    pub l_exp: u32,
    /// Key length `N`.
    pub key_length: usize,
    /// Largest absolute injected error.
    pub err_bound: u64,
    /// Standard deviation of the injected-error Gaussian; `err_bound / 3` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for CipherConfig {
    fn default() -> Self {
        Self {
            p_exp: 10,
            l_exp: 11,
            key_length: 10,
            err_bound: 100,
            sigma: None,
        }
    }
}

/// Validated parameters with derived moduli.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CipherConfig", into = "CipherConfig")]
pub struct CipherParams {
    config: CipherConfig,
    p: BigInt,
    l: BigInt,
    q: BigInt,
    half_p: i128,
    half_q: BigInt,
    neg_half_q: BigInt,
    /// `10^i` for `i < digits`.
    powers: Vec<BigInt>,
}

impl CipherParams {
    pub fn new(config: CipherConfig) -> Result<Self, LweError> {
        if config.key_length == 0 {
            return Err(LweError::InvalidParams("key length N must be at least 1".into()));
        }
        if config.p_exp == 0 || config.p_exp > MAX_P_EXP {
            return Err(LweError::InvalidParams(format!(
                "p_exp must be in 1..={MAX_P_EXP}, got {}",
                config.p_exp
            )));
        }
        if let Some(sigma) = config.sigma {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(LweError::InvalidParams(format!(
                    "sigma must be finite and >= 0, got {sigma}"
                )));
            }
        }
        let ten = BigInt::from(10u32);
        let p = num_traits::pow(ten.clone(), config.p_exp as usize);
        let l = num_traits::pow(ten.clone(), config.l_exp as usize);
        // err_bound < L/2  <=>  2 * err_bound < L
        if BigInt::from(config.err_bound) * 2u32 >= l {
            return Err(LweError::InvalidParams(format!(
                "err_bound {} must be below L/2 = 10^{}/2",
                config.err_bound, config.l_exp
            )));
        }
        let q = &l * &p;
        let digits = (config.p_exp + config.l_exp) as usize;
        let mut powers = Vec::with_capacity(digits);
        let mut acc = BigInt::one();
        for _ in 0..digits {
            powers.push(acc.clone());
            acc *= &ten;
        }
        let half_p = 10i128.pow(config.p_exp) / 2;
        let half_q = &q / 2u32;
        let neg_half_q = -half_q.clone();
        Ok(Self {
            config,
            p,
            l,
            q,
            half_p,
            half_q,
            neg_half_q,
            powers,
        })
    }

    pub fn config(&self) -> &CipherConfig {
        &self.config
    }

    pub fn p_exp(&self) -> u32 {
        self.config.p_exp
    }

    pub fn l_exp(&self) -> u32 {
        self.config.l_exp
    }

    /// Plaintext modulus `p`.
    pub fn p(&self) -> &BigInt {
        &self.p
    }

    /// Noise-absorbing scale `L`.
    pub fn l(&self) -> &BigInt {
        &self.l
    }

    /// Ciphertext modulus `q = L p`.
    pub fn q(&self) -> &BigInt {
        &self.q
    }

    pub fn half_q(&self) -> &BigInt {
        &self.half_q
    }

    /// `p / 2`; valid messages satisfy `|m| < p/2`.
    pub fn half_p(&self) -> i128 {
        self.half_p
    }

    /// Key length `N`.
    pub fn key_length(&self) -> usize {
        self.config.key_length
    }

    /// Ciphertext row width `N + 1`.
    pub fn width(&self) -> usize {
        self.config.key_length + 1
    }

    /// Number of base-10 digits of `q`, i.e. `log10 q`.
    pub fn digits(&self) -> usize {
        self.powers.len()
    }

    pub fn err_bound(&self) -> u64 {
        self.config.err_bound
    }

    pub fn sigma(&self) -> f64 {
        self.config.sigma.unwrap_or(self.config.err_bound as f64 / 3.0)
    }

    pub(crate) fn powers_of_ten(&self) -> &[BigInt] {
        &self.powers
    }

    /// Reduces `a` to its centered residue in `[-q/2, q/2)`.
    pub fn reduce(&self, a: &BigInt) -> BigInt {
        super::mod_centered(a, &self.q)
    }

    pub(crate) fn reduce_in_place(&self, a: &mut BigInt) {
        if *a >= self.half_q || *a < self.neg_half_q {
            *a = super::mod_centered(a, &self.q);
        }
    }

    pub(crate) fn zero_row(&self) -> Vec<BigInt> {
        vec![BigInt::zero(); self.width()]
    }
}

impl TryFrom<CipherConfig> for CipherParams {
    type Error = LweError;

    fn try_from(config: CipherConfig) -> Result<Self, Self::Error> {
        Self::new(config)
    }
}

impl From<CipherParams> for CipherConfig {
    fn from(params: CipherParams) -> Self {
        params.config
    }
}
