use num_bigint::BigInt;

use super::CipherParams;

/// Worst-case noise added by one `×_C`: every digit is at most 9 and each of
/// the `d (N+1)` zero-encryptions carries at most `err_bound`.
fn per_mult(params: &CipherParams) -> u128 {
    params.digits() as u128 * params.width() as u128 * 9 * params.err_bound() as u128
}

/// Upper bound on additive noise after `steps` steps of `adds_per_step`
/// fresh injections and `mults_per_step` homomorphic multiplications:
/// `steps (adds err_bound + mults d (N+1) 9 err_bound)`.
///
/// Decryption stays exact while the bound is below `L/2`; see
/// [`CipherParams::within_budget`].
pub fn error_budget(params: &CipherParams, steps: u64, mults_per_step: u64, adds_per_step: u64) -> u128 {
    let per_step = adds_per_step as u128 * params.err_bound() as u128 + mults_per_step as u128 * per_mult(params);
    steps as u128 * per_step
}

/// Noise of `Enc2(m1) ×_C c` when `c` carries noise at most `input_noise`
/// and `|m1| <= multiplier_abs`.
pub fn mult_noise_bound(params: &CipherParams, multiplier_abs: u128, input_noise: u128) -> u128 {
    multiplier_abs * input_noise + per_mult(params)
}

impl CipherParams {
    /// True when `noise < L/2`.
    pub fn within_budget(&self, noise: u128) -> bool {
        BigInt::from(noise) * 2u32 < *self.l()
    }
}
