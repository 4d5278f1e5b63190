use num_bigint::BigInt;
use num_integer::Integer;

use super::{encrypt, CipherParams, Ciphertext, LweError, Plaintext, Rng, SecretKey};

/// Multiplier encoding `m1 R + O` of a scalar: `d (N+1)` rows of width `N + 1`.
///
/// Row `i (N+1) + j` carries `m1 10^i` in column `j` on top of a fresh
/// encryption of zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiplierCiphertext {
    rows: Vec<Vec<BigInt>>,
}

impl MultiplierCiphertext {
    pub fn from_rows(params: &CipherParams, rows: Vec<Vec<BigInt>>) -> Result<Self, LweError> {
        let expected = params.digits() * params.width();
        if rows.len() != expected {
            return Err(LweError::DimensionMismatch(format!(
                "multiplier has {} rows, expected d(N+1) = {expected}",
                rows.len()
            )));
        }
        // validate widths and reduce through the ciphertext path
        let ct = Ciphertext::from_rows(params, rows)?;
        Ok(Self {
            rows: ct.rows().to_vec(),
        })
    }

    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    pub fn is_reduced(&self, params: &CipherParams) -> bool {
        let lo = -params.half_q().clone();
        self.rows.iter().flatten().all(|x| x >= &lo && x < params.half_q())
    }
}

/// `Enc2(m1) = (m1 R + O) mod q` where each row of `O` encrypts zero.
pub fn encrypt_multiplier(
    params: &CipherParams,
    key: &SecretKey,
    m1: Plaintext,
    rng: &mut Rng,
) -> Result<MultiplierCiphertext, LweError> {
    let half_p = params.half_p();
    if m1 >= half_p || m1 <= -half_p {
        return Err(LweError::MessageOutOfRange { value: m1, half_p });
    }
    let width = params.width();
    let zeros = vec![0; params.digits() * width];
    let mut rows = encrypt(params, key, &zeros, rng)?.rows().to_vec();
    if m1 != 0 {
        let m1 = BigInt::from(m1);
        for (i, pow) in params.powers_of_ten().iter().enumerate() {
            let shift = &m1 * pow;
            for j in 0..width {
                let entry = &mut rows[i * width + j][j];
                *entry += &shift;
                params.reduce_in_place(entry);
            }
        }
    }
    Ok(MultiplierCiphertext { rows })
}

/// Base-10 digits of a ciphertext row, digit-major: entry `i (N+1) + j` is
/// digit `i` of component `j`, taken from its representative in `[0, q)`.
pub fn decompose(params: &CipherParams, row: &[BigInt]) -> Vec<u8> {
    let width = row.len();
    let digits = params.digits();
    let mut out = vec![0u8; digits * width];
    for (j, c) in row.iter().enumerate() {
        let canonical = c.mod_floor(params.q());
        let (_, ds) = canonical.to_radix_le(10);
        for (i, &dg) in ds.iter().enumerate().take(digits) {
            out[i * width + j] = dg;
        }
    }
    out
}

/// `Enc2(m1) ×_C Enc(m2) = D(c) · M1 mod q`, applied row by row.
pub fn mult_ct(params: &CipherParams, mc: &MultiplierCiphertext, ct: &Ciphertext) -> Result<Ciphertext, LweError> {
    let width = params.width();
    if mc.rows.len() != params.digits() * width {
        return Err(LweError::DimensionMismatch(format!(
            "multiplier has {} rows, expected {}",
            mc.rows.len(),
            params.digits() * width
        )));
    }
    let mut out = Vec::with_capacity(ct.len());
    for row in ct.rows() {
        if row.len() != width {
            return Err(LweError::DimensionMismatch(format!(
                "ciphertext row has {} entries, expected {width}",
                row.len()
            )));
        }
        let digits = decompose(params, row);
        // Group the multiplier rows by digit value, then scale each group once.
        let mut buckets: [Option<Vec<BigInt>>; 9] = Default::default();
        for (r, &dg) in digits.iter().enumerate() {
            if dg == 0 {
                continue;
            }
            let bucket = buckets[(dg - 1) as usize].get_or_insert_with(|| params.zero_row());
            for (acc, x) in bucket.iter_mut().zip(&mc.rows[r]) {
                *acc += x;
            }
        }
        let mut acc = params.zero_row();
        for (idx, bucket) in buckets.iter().enumerate() {
            if let Some(bucket) = bucket {
                let scale = (idx + 1) as u32;
                for (a, b) in acc.iter_mut().zip(bucket) {
                    *a += b * scale;
                }
            }
        }
        acc.iter_mut().for_each(|x| params.reduce_in_place(x));
        out.push(acc);
    }
    Ok(Ciphertext::from_reduced(out))
}
