//! Integer reformulation of dynamic controllers and their encrypted execution.
//!
//! A controller `x+ = F x + G y, u = H x` with integer `F` is rescaled into
//! integer arithmetic ([`IntegerController`]) and then run entirely on
//! ciphertexts ([`EncryptedController`]). The mismatch estimators of the
//! formation loop are one-dimensional instances held in an
//! [`EncryptedEstimatorBank`].
//!
//! There is no reset: the encrypted state is only ever advanced.

mod controller;
mod estimator;

use thiserror::Error;

use crate::lwe::LweError;

pub use controller::{
    encrypt_controller, to_integer_controller, CoefficientMode, EncryptedController, IntegerController, Multiplier,
};
pub use estimator::{estimator_coeff, estimator_step_encrypted, read_mu_hat, EncryptedEstimatorBank, EstimatorConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("state matrix entry F[{row}][{col}] = {value} is not an integer")]
    NonIntegerStateMatrix { row: usize, col: usize, value: f64 },
    #[error("coefficient {0} is not an integer")]
    NonIntegerCoefficient(f64),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no estimator installed for edge {0}")]
    UnknownEdge(usize),
    #[error(transparent)]
    Lwe(#[from] LweError),
}
