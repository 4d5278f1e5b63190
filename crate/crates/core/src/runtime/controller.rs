use crate::lwe::{
    add_ct, encrypt, encrypt_multiplier, mul_public, mult_ct, CipherParams, Ciphertext, MultiplierCiphertext,
    Plaintext, Rng, SecretKey,
};
use crate::quantizer::Scale;

use super::RuntimeError;

/// `x+ = F x + ⌈G/s1⌋ y`, `u = ⌈H/s3⌋ x`, `x(0) = ⌈x0/(s1 s2)⌋`, all over the integers.
///
/// `h` is `None` when the output is the state itself (`H = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct IntegerController {
    pub f: Vec<Vec<Plaintext>>,
    pub g: Vec<Vec<Plaintext>>,
    pub h: Option<Vec<Vec<Plaintext>>>,
    pub s1: Scale,
    pub s2: Scale,
    pub s3: Scale,
    pub x0: Vec<Plaintext>,
}

fn round_matrix(m: &[Vec<f64>], scale: Scale) -> Vec<Vec<Plaintext>> {
    m.iter()
        .map(|row| row.iter().map(|&v| scale.remove(v).round() as Plaintext).collect())
        .collect()
}

fn check_shape(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<(), RuntimeError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(RuntimeError::DimensionMismatch(format!("{name} must be {rows}x{cols}")));
    }
    Ok(())
}

/// Converts a real controller with integer `F` to integer form.
///
/// Requires `1/s1 >= 1`, `s2 >= 1` and `1/s3 >= 1`.
pub fn to_integer_controller(
    f: &[Vec<f64>],
    g: &[Vec<f64>],
    h: Option<&[Vec<f64>]>,
    x0: &[f64],
    s1: Scale,
    s2: Scale,
    s3: Scale,
) -> Result<IntegerController, RuntimeError> {
    if s1.exp() > 0 || s3.exp() > 0 {
        return Err(RuntimeError::InvalidScale("s1 and s3 must be at most 1".into()));
    }
    if s2.exp() < 0 {
        return Err(RuntimeError::InvalidScale("s2 must be at least 1".into()));
    }
    let n = f.len();
    check_shape("F", f, n, n)?;
    let m = g.first().map_or(0, Vec::len);
    check_shape("G", g, n, m)?;
    if let Some(h) = h {
        let rows = h.len();
        check_shape("H", h, rows, n)?;
    }
    if x0.len() != n {
        return Err(RuntimeError::DimensionMismatch(format!(
            "x0 has {} entries, expected {n}",
            x0.len()
        )));
    }
    for (i, row) in f.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v.fract() != 0.0 {
                return Err(RuntimeError::NonIntegerStateMatrix {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(IntegerController {
        f: round_matrix(f, Scale::ONE),
        g: round_matrix(g, s1),
        h: h.map(|h| round_matrix(h, s3)),
        s1,
        s2,
        s3,
        x0: x0
            .iter()
            .map(|&v| s1.compose(s2).remove(v).round() as Plaintext)
            .collect(),
    })
}

impl IntegerController {
    pub fn state_dim(&self) -> usize {
        self.f.len()
    }

    pub fn input_dim(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    /// Plaintext step: returns `(x+, u)` with `u` taken from the current state.
    pub fn step(&self, x: &[Plaintext], y: &[Plaintext]) -> (Vec<Plaintext>, Vec<Plaintext>) {
        let u = match &self.h {
            Some(h) => mat_vec(h, x),
            None => x.to_vec(),
        };
        let fx = mat_vec(&self.f, x);
        let gy = mat_vec(&self.g, y);
        (fx.iter().zip(&gy).map(|(a, b)| a + b).collect(), u)
    }
}

fn mat_vec(m: &[Vec<Plaintext>], v: &[Plaintext]) -> Vec<Plaintext> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// How constant coefficients are held on the computing side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// Every coefficient is a multiplier ciphertext.
    #[default]
    Encrypted,
    /// Coefficients are public integers (for non-private parameters).
    Public,
}

/// A coefficient as stored by the computing side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Multiplier {
    Encrypted(MultiplierCiphertext),
    Public(Plaintext),
}

impl Multiplier {
    pub fn new(
        params: &CipherParams,
        key: &SecretKey,
        value: Plaintext,
        mode: CoefficientMode,
        rng: &mut Rng,
    ) -> Result<Self, RuntimeError> {
        Ok(match mode {
            CoefficientMode::Encrypted => Multiplier::Encrypted(encrypt_multiplier(params, key, value, rng)?),
            CoefficientMode::Public => Multiplier::Public(value),
        })
    }

    pub fn apply(&self, params: &CipherParams, ct: &Ciphertext) -> Result<Ciphertext, RuntimeError> {
        Ok(match self {
            Multiplier::Encrypted(mc) => mult_ct(params, mc, ct)?,
            Multiplier::Public(k) => mul_public(params, ct, *k),
        })
    }

    pub fn is_encrypted(&self) -> bool {
        matches!(self, Multiplier::Encrypted(_))
    }
}

/// Controller running over ciphertexts. The state is one single-row
/// ciphertext per component.
#[derive(Clone, Debug)]
pub struct EncryptedController {
    params: CipherParams,
    f: Vec<Vec<Multiplier>>,
    g: Vec<Vec<Multiplier>>,
    h: Option<Vec<Vec<Multiplier>>>,
    x: Vec<Ciphertext>,
    step_count: u64,
}

fn encrypt_matrix(
    params: &CipherParams,
    key: &SecretKey,
    m: &[Vec<Plaintext>],
    mode: CoefficientMode,
    rng: &mut Rng,
) -> Result<Vec<Vec<Multiplier>>, RuntimeError> {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|&v| Multiplier::new(params, key, v, mode, rng))
                .collect()
        })
        .collect()
}

/// `F = Enc2(F)`, `G = Enc2(⌈G/s1⌋)`, `H = Enc2(⌈H/s3⌋)` and `x(0) = Enc(⌈x0/(s1 s2)⌋)`.
pub fn encrypt_controller(
    ic: &IntegerController,
    params: &CipherParams,
    key: &SecretKey,
    mode: CoefficientMode,
    rng: &mut Rng,
) -> Result<EncryptedController, RuntimeError> {
    let f = encrypt_matrix(params, key, &ic.f, mode, rng)?;
    let g = encrypt_matrix(params, key, &ic.g, mode, rng)?;
    let h =
        ic.h.as_ref()
            .map(|h| encrypt_matrix(params, key, h, mode, rng))
            .transpose()?;
    let x = ic
        .x0
        .iter()
        .map(|&v| encrypt(params, key, &[v], rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedController {
        params: params.clone(),
        f,
        g,
        h,
        x,
        step_count: 0,
    })
}

fn apply_matrix(
    params: &CipherParams,
    m: &[Vec<Multiplier>],
    v: &[Ciphertext],
) -> Result<Vec<Ciphertext>, RuntimeError> {
    m.iter()
        .map(|row| {
            let mut acc: Option<Ciphertext> = None;
            for (coef, ct) in row.iter().zip(v) {
                let term = coef.apply(params, ct)?;
                acc = Some(match acc {
                    Some(a) => add_ct(params, &a, &term)?,
                    None => term,
                });
            }
            acc.ok_or_else(|| RuntimeError::DimensionMismatch("empty matrix row".into()))
        })
        .collect()
}

impl EncryptedController {
    /// One step: returns `u(k)` and advances `x(k+1) = F x(k) + G y(k)`.
    pub fn step_encrypted(&mut self, y: &[Ciphertext]) -> Result<Vec<Ciphertext>, RuntimeError> {
        let input_dim = self.g.first().map_or(0, Vec::len);
        if y.len() != input_dim {
            return Err(RuntimeError::DimensionMismatch(format!(
                "input has {} components, G expects {input_dim}",
                y.len()
            )));
        }
        let u = match &self.h {
            Some(h) => apply_matrix(&self.params, h, &self.x)?,
            None => self.x.clone(),
        };
        let fx = apply_matrix(&self.params, &self.f, &self.x)?;
        let gy = apply_matrix(&self.params, &self.g, y)?;
        self.x = fx
            .iter()
            .zip(&gy)
            .map(|(a, b)| add_ct(&self.params, a, b))
            .collect::<Result<_, _>>()?;
        self.step_count += 1;
        Ok(u)
    }

    /// Current encrypted state.
    pub fn state(&self) -> &[Ciphertext] {
        &self.x
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn params(&self) -> &CipherParams {
        &self.params
    }

    /// Every stored coefficient, for inspection of what the computing side holds.
    pub fn coefficients(&self) -> impl Iterator<Item = &Multiplier> {
        self.f.iter().chain(&self.g).chain(self.h.iter().flatten()).flatten()
    }

    /// Homomorphic multiplications performed per step.
    pub fn mults_per_step(&self) -> usize {
        self.coefficients().filter(|m| m.is_encrypted()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lwe::{decrypt, keygen, CipherConfig};

    fn params() -> CipherParams {
        CipherParams::new(CipherConfig {
            p_exp: 10,
            l_exp: 6,
            key_length: 10,
            err_bound: 100,
            sigma: None,
        })
        .unwrap()
    }

    fn scalar(f: f64, g: f64) -> IntegerController {
        to_integer_controller(&[vec![f]], &[vec![g]], None, &[0.0], Scale::ONE, Scale::ONE, Scale::ONE).unwrap()
    }

    #[test]
    fn integer_conversion() {
        let ic = to_integer_controller(
            &[vec![1.0]],
            &[vec![0.05]],
            Some(&[vec![0.3]]),
            &[0.2],
            Scale(-2),
            Scale(1),
            Scale(-1),
        )
        .unwrap();
        assert_eq!(ic.f, vec![vec![1]]);
        assert_eq!(ic.g, vec![vec![5]]);
        assert_eq!(ic.h, Some(vec![vec![3]]));
        // 0.2 / (0.01 * 10) = 2
        assert_eq!(ic.x0, vec![2]);
    }

    #[test]
    fn rejects_fractional_state_matrix() {
        let err = to_integer_controller(
            &[vec![0.5]],
            &[vec![1.0]],
            None,
            &[0.0],
            Scale::ONE,
            Scale::ONE,
            Scale::ONE,
        )
        .unwrap_err();
        assert_eq!(
            err,
            RuntimeError::NonIntegerStateMatrix {
                row: 0,
                col: 0,
                value: 0.5
            }
        );
    }

    #[test]
    fn rejects_bad_scales() {
        assert!(matches!(
            to_integer_controller(
                &[vec![1.0]],
                &[vec![1.0]],
                None,
                &[0.0],
                Scale(1),
                Scale::ONE,
                Scale::ONE
            ),
            Err(RuntimeError::InvalidScale(_))
        ));
        assert!(matches!(
            to_integer_controller(
                &[vec![1.0]],
                &[vec![1.0]],
                None,
                &[0.0],
                Scale::ONE,
                Scale(-1),
                Scale::ONE
            ),
            Err(RuntimeError::InvalidScale(_))
        ));
    }

    #[test]
    fn scalar_integrator_matches_oracle() {
        let params = params();
        let mut rng = Rng::from_seed(8);
        let key = keygen(&params, &mut rng);
        let ic = scalar(1.0, 1.0);
        let mut ec = encrypt_controller(&ic, &params, &key, CoefficientMode::Encrypted, &mut rng).unwrap();
        let mut seen = vec![decrypt(&params, &key, &ec.state()[0])[0]];
        for y in [3, -1, 4] {
            let y_ct = encrypt(&params, &key, &[y], &mut rng).unwrap();
            let u = ec.step_encrypted(&[y_ct]).unwrap();
            // pass-through output is the pre-update state
            assert_eq!(decrypt(&params, &key, &u[0])[0], *seen.last().unwrap());
            seen.push(decrypt(&params, &key, &ec.state()[0])[0]);
        }
        assert_eq!(seen, vec![0, 3, 2, 6]);
        assert_eq!(ec.step_count(), 3);
    }

    #[test]
    fn zero_and_identity_controllers() {
        let params = params();
        let mut rng = Rng::from_seed(9);
        let key = keygen(&params, &mut rng);
        let mut zero =
            encrypt_controller(&scalar(0.0, 0.0), &params, &key, CoefficientMode::Encrypted, &mut rng).unwrap();
        let mut hold = to_integer_controller(
            &[vec![1.0]],
            &[vec![0.0]],
            None,
            &[7.0],
            Scale::ONE,
            Scale::ONE,
            Scale::ONE,
        )
        .map(|ic| encrypt_controller(&ic, &params, &key, CoefficientMode::Encrypted, &mut rng).unwrap())
        .unwrap();
        for y in [5, -3, 11] {
            let y_ct = encrypt(&params, &key, &[y], &mut rng).unwrap();
            let u = zero.step_encrypted(std::slice::from_ref(&y_ct)).unwrap();
            assert_eq!(decrypt(&params, &key, &u[0]), vec![0]);
            hold.step_encrypted(&[y_ct]).unwrap();
            assert_eq!(decrypt(&params, &key, &hold.state()[0]), vec![7]);
        }
    }

    #[test]
    fn two_state_with_output_matrix() {
        let params = params();
        let mut rng = Rng::from_seed(10);
        let key = keygen(&params, &mut rng);
        let ic = IntegerController {
            f: vec![vec![1, 1], vec![0, 1]],
            g: vec![vec![0], vec![2]],
            h: Some(vec![vec![3, -1]]),
            s1: Scale::ONE,
            s2: Scale::ONE,
            s3: Scale::ONE,
            x0: vec![1, -2],
        };
        for mode in [CoefficientMode::Encrypted, CoefficientMode::Public] {
            let mut ec = encrypt_controller(&ic, &params, &key, mode, &mut rng).unwrap();
            let mut x = ic.x0.clone();
            for y in [4, -6, 1, 0, 9] {
                let (next, u) = ic.step(&x, &[y]);
                let y_ct = encrypt(&params, &key, &[y], &mut rng).unwrap();
                let u_ct = ec.step_encrypted(&[y_ct]).unwrap();
                assert_eq!(decrypt(&params, &key, &u_ct[0]), u);
                x = next;
                let state: Vec<_> = ec.state().iter().map(|c| decrypt(&params, &key, c)[0]).collect();
                assert_eq!(state, x);
            }
        }
    }

    #[test]
    fn input_dimension_checked() {
        let params = params();
        let mut rng = Rng::from_seed(10);
        let key = keygen(&params, &mut rng);
        let mut ec = encrypt_controller(&scalar(1.0, 1.0), &params, &key, CoefficientMode::Public, &mut rng).unwrap();
        assert!(matches!(
            ec.step_encrypted(&[]),
            Err(RuntimeError::DimensionMismatch(_))
        ));
    }
}
