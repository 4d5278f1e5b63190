use num_bigint::{BigInt, RandBigInt};
use num_integer::Integer;
use num_traits::{Signed, Zero};

use super::{CipherParams, DiscreteGaussian, LweError, Plaintext, Rng, SecretKey};

/// Encryption of an `n`-vector: `n` rows of width `N + 1`.
///
/// Column 0 of each row is the body `(-A sk + L m + e) mod q`, columns
/// `1..=N` are the randomness `A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    rows: Vec<Vec<BigInt>>,
}

impl Ciphertext {
    /// Wraps raw rows, reducing every entry into `[-q/2, q/2)`.
    pub fn from_rows(params: &CipherParams, rows: Vec<Vec<BigInt>>) -> Result<Self, LweError> {
        let mut rows = rows;
        for row in &mut rows {
            if row.len() != params.width() {
                return Err(LweError::DimensionMismatch(format!(
                    "ciphertext row has {} entries, expected N+1 = {}",
                    row.len(),
                    params.width()
                )));
            }
            row.iter_mut().for_each(|x| params.reduce_in_place(x));
        }
        Ok(Self { rows })
    }

    pub(crate) fn from_reduced(rows: Vec<Vec<BigInt>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    /// Message dimension `n`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Splits a multi-row ciphertext into single-row ciphertexts.
    pub fn split(self) -> Vec<Ciphertext> {
        self.rows.into_iter().map(|r| Ciphertext { rows: vec![r] }).collect()
    }

    /// Stacks ciphertexts row-wise.
    pub fn stack(parts: impl IntoIterator<Item = Ciphertext>) -> Ciphertext {
        Ciphertext {
            rows: parts.into_iter().flat_map(|c| c.rows).collect(),
        }
    }

    /// True when every entry is a centered residue modulo `q`.
    pub fn is_reduced(&self, params: &CipherParams) -> bool {
        let lo = -params.half_q().clone();
        self.rows.iter().flatten().all(|x| x >= &lo && x < params.half_q())
    }
}

fn check_message(params: &CipherParams, m: Plaintext) -> Result<(), LweError> {
    let half_p = params.half_p();
    if m >= half_p || m <= -half_p {
        return Err(LweError::MessageOutOfRange { value: m, half_p });
    }
    Ok(())
}

/// Encrypts with caller-supplied randomness `a` (`n × N`) and errors `e`.
pub fn encrypt_with(
    params: &CipherParams,
    key: &SecretKey,
    m: &[Plaintext],
    a: &[Vec<BigInt>],
    e: &[i64],
) -> Result<Ciphertext, LweError> {
    if a.len() != m.len() || e.len() != m.len() {
        return Err(LweError::DimensionMismatch(format!(
            "message has {} entries but randomness has {} rows and {} errors",
            m.len(),
            a.len(),
            e.len()
        )));
    }
    if key.len() != params.key_length() {
        return Err(LweError::DimensionMismatch(format!(
            "key has {} components, params expect {}",
            key.len(),
            params.key_length()
        )));
    }
    for &mi in m {
        check_message(params, mi)?;
    }
    let mut rows = Vec::with_capacity(m.len());
    for ((&mi, ai), &ei) in m.iter().zip(a).zip(e) {
        if ai.len() != params.key_length() {
            return Err(LweError::DimensionMismatch(format!(
                "randomness row has {} entries, expected N = {}",
                ai.len(),
                params.key_length()
            )));
        }
        let mut body = params.l() * BigInt::from(mi) + BigInt::from(ei);
        for (aij, skj) in ai.iter().zip(key.sk()) {
            body -= aij * skj;
        }
        let mut row = Vec::with_capacity(params.width());
        row.push(params.reduce(&body));
        row.extend(ai.iter().map(|x| params.reduce(x)));
        rows.push(row);
    }
    Ok(Ciphertext { rows })
}

/// `Enc(m) = [(-A sk + L m + e) mod q, A]` with uniform `A` and truncated-Gaussian `e`.
pub fn encrypt(params: &CipherParams, key: &SecretKey, m: &[Plaintext], rng: &mut Rng) -> Result<Ciphertext, LweError> {
    for &mi in m {
        check_message(params, mi)?;
    }
    let lo = -params.half_q().clone();
    let hi = params.q() - params.half_q();
    let gauss = DiscreteGaussian::new(params.sigma(), params.err_bound());
    let mut a = Vec::with_capacity(m.len());
    let mut e = Vec::with_capacity(m.len());
    for _ in m {
        a.push(
            (0..params.key_length())
                .map(|_| rng.gen_bigint_range(&lo, &hi))
                .collect::<Vec<_>>(),
        );
        e.push(gauss.sample(rng));
    }
    encrypt_with(params, key, m, &a, &e)
}

/// Computes the noisy phase `(c · s) mod q = L m + e` of one row.
pub(crate) fn phase(params: &CipherParams, key: &SecretKey, row: &[BigInt]) -> BigInt {
    let mut acc = BigInt::zero();
    for (c, s) in row.iter().zip(key.extended()) {
        acc += c * s;
    }
    params.reduce(&acc)
}

/// `⌈ ((c · s) mod q) / L ⌋` per row, rounding half away from zero.
///
/// Wraps silently when the accumulated noise reaches `L/2`.
pub fn decrypt(params: &CipherParams, key: &SecretKey, ct: &Ciphertext) -> Vec<Plaintext> {
    ct.rows
        .iter()
        .map(|row| {
            let ph = phase(params, key, row);
            let (quot, rem) = ph.abs().div_rem(params.l());
            let mut mag = quot;
            if rem * 2u32 >= *params.l() {
                mag += 1u32;
            }
            let v = i128::try_from(mag).expect("decrypted magnitude is at most p/2");
            if ph.is_negative() {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Entry-wise `(a + b) mod q`.
pub fn add_ct(params: &CipherParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, LweError> {
    if a.rows.len() != b.rows.len() {
        return Err(LweError::DimensionMismatch(format!(
            "cannot add ciphertexts with {} and {} rows",
            a.rows.len(),
            b.rows.len()
        )));
    }
    let mut rows = Vec::with_capacity(a.rows.len());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        if ra.len() != rb.len() || ra.len() != params.width() {
            return Err(LweError::DimensionMismatch(format!(
                "row widths {} and {} (expected {})",
                ra.len(),
                rb.len(),
                params.width()
            )));
        }
        rows.push(
            ra.iter()
                .zip(rb)
                .map(|(x, y)| {
                    let mut s = x + y;
                    params.reduce_in_place(&mut s);
                    s
                })
                .collect(),
        );
    }
    Ok(Ciphertext { rows })
}

/// Multiplies a ciphertext by a public integer, `(k c) mod q`.
///
/// The noise grows by `|k|`. Only meant for parameters that are not private.
pub fn mul_public(params: &CipherParams, ct: &Ciphertext, k: Plaintext) -> Ciphertext {
    let k = BigInt::from(k);
    Ciphertext {
        rows: ct
            .rows
            .iter()
            .map(|r| r.iter().map(|x| params.reduce(&(x * &k))).collect())
            .collect(),
    }
}
