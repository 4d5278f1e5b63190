//! Privacy-preserving distributed formation control over LWE homomorphic encryption.
//!
//! * [`lwe`]: the cryptosystem (encryption, addition, digit-decomposition multiplication).
//! * [`quantizer`]: uniform and logarithmic scaled quantization into the plaintext space.
//! * [`runtime`]: integer controllers and the encrypted mismatch-estimator bank.
//! * [`formation`]: plaintext distance-based formation control with estimators.
//! * [`sim`]: agent/edge endpoints, the closed loop, Monte Carlo sweeps and CSV export.

pub mod formation;
pub mod lwe;
pub mod quantizer;
pub mod runtime;
pub mod sim;
