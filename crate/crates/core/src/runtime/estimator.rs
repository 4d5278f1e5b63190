use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lwe::{decrypt, CipherParams, Ciphertext, Rng, SecretKey};
use crate::quantizer::{dequantize, Scale};

use super::{encrypt_controller, CoefficientMode, EncryptedController, IntegerController, RuntimeError};

/// Gains and scales of the discretized mismatch estimator
/// `xi+ = xi + Ts kappa (e_tail - mu_hat)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kappa: f64,
    /// Sampling time `Ts` in seconds.
    pub ts: f64,
    /// State scale `s1 <= 1`; the integer state is `xi / s1`.
    pub s1: Scale,
    /// Fixed uniform scale applied by agents to `e_tail - mu_hat` before encryption.
    pub measurement: Scale,
    #[serde(default)]
    pub coefficients: CoefficientMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            ts: 0.01,
            s1: Scale(-2),
            measurement: Scale(4),
            coefficients: CoefficientMode::Encrypted,
        }
    }
}

impl EstimatorConfig {
    /// Integer gain `Ts kappa / s1`.
    pub fn coefficient(&self) -> Result<i128, RuntimeError> {
        estimator_coeff(self.kappa, self.ts, self.s1)
    }

    /// Scale relating the integer state to `mu_hat`: `mu_hat = s1 xi_int / S_meas`.
    pub fn state_scale(&self) -> Scale {
        Scale(self.measurement.exp() - self.s1.exp())
    }

    /// Plaintext integer model of one edge estimator.
    pub fn integer_model(&self) -> Result<IntegerController, RuntimeError> {
        Ok(IntegerController {
            f: vec![vec![1]],
            g: vec![vec![self.coefficient()?]],
            h: None,
            s1: self.s1,
            s2: Scale::ONE,
            s3: Scale::ONE,
            x0: vec![0],
        })
    }
}

/// `Ts kappa / s1`, which must be an integer.
pub fn estimator_coeff(kappa: f64, ts: f64, s1: Scale) -> Result<i128, RuntimeError> {
    if s1.exp() > 0 {
        return Err(RuntimeError::InvalidScale(format!("s1 = 10^{} exceeds 1", s1.exp())));
    }
    let v = s1.remove(ts * kappa);
    let r = v.round();
    if !v.is_finite() || (v - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(RuntimeError::NonIntegerCoefficient(v));
    }
    Ok(r as i128)
}

/// Per-edge encrypted estimator states, each under its tail agent's key.
///
/// The bank only ever holds ciphertexts and (optionally public) integer gains;
/// it cannot decrypt.
#[derive(Clone, Debug)]
pub struct EncryptedEstimatorBank {
    config: EstimatorConfig,
    coefficient: i128,
    edges: BTreeMap<usize, EncryptedController>,
}

impl EncryptedEstimatorBank {
    pub fn new(config: EstimatorConfig) -> Result<Self, RuntimeError> {
        Ok(Self {
            coefficient: config.coefficient()?,
            config,
            edges: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn coefficient(&self) -> i128 {
        self.coefficient
    }

    /// Agent-side provisioning: encrypts `Enc2(1)`, `Enc2(Ts kappa/s1)` and
    /// `Enc(0)` under the tail agent's key for installation with [`Self::install`].
    pub fn provision(
        &self,
        params: &CipherParams,
        key: &SecretKey,
        rng: &mut Rng,
    ) -> Result<EncryptedController, RuntimeError> {
        encrypt_controller(
            &self.config.integer_model()?,
            params,
            key,
            self.config.coefficients,
            rng,
        )
    }

    pub fn install(&mut self, edge: usize, estimator: EncryptedController) {
        self.edges.insert(edge, estimator);
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.keys().copied()
    }

    /// Encrypted integer state of `edge`.
    pub fn state(&self, edge: usize) -> Result<&Ciphertext, RuntimeError> {
        self.edges
            .get(&edge)
            .map(|e| &e.state()[0])
            .ok_or(RuntimeError::UnknownEdge(edge))
    }

    pub fn step_count(&self, edge: usize) -> Result<u64, RuntimeError> {
        self.edges
            .get(&edge)
            .map(EncryptedController::step_count)
            .ok_or(RuntimeError::UnknownEdge(edge))
    }

    pub fn estimators(&self) -> impl Iterator<Item = (usize, &EncryptedController)> {
        self.edges.iter().map(|(&k, v)| (k, v))
    }
}

/// `xi <- 1 ×_C xi + (Ts kappa/s1) ×_C diff`, never decrypting.
pub fn estimator_step_encrypted(
    bank: &mut EncryptedEstimatorBank,
    edge: usize,
    diff: &Ciphertext,
) -> Result<(), RuntimeError> {
    let estimator = bank.edges.get_mut(&edge).ok_or(RuntimeError::UnknownEdge(edge))?;
    estimator.step_encrypted(std::slice::from_ref(diff))?;
    Ok(())
}

/// Decrypts the state of `edge` and rescales it to `mu_hat = s1 xi_int / S_meas`.
pub fn read_mu_hat(
    bank: &EncryptedEstimatorBank,
    edge: usize,
    params: &CipherParams,
    key: &SecretKey,
) -> Result<f64, RuntimeError> {
    let ct = bank.state(edge)?;
    let xi = decrypt(params, key, ct)[0];
    Ok(dequantize(xi, bank.config.state_scale()))
}
