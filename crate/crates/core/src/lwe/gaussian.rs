//! Truncated discrete Gaussian for the injected error.

use rand::Rng as _;

use super::Rng;

/// Zero-mean discrete Gaussian with parameter `sigma`, restricted to `[-bound, bound]`.
///
/// Sampled by rejection from the uniform distribution on the support, which
/// yields the exact truncated distribution `P(x) ∝ exp(-x^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug)]
pub struct DiscreteGaussian {
    sigma: f64,
    bound: i64,
}

impl DiscreteGaussian {
    pub fn new(sigma: f64, bound: u64) -> Self {
        Self {
            sigma,
            bound: bound.min(i64::MAX as u64) as i64,
        }
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn sample(&self, rng: &mut Rng) -> i64 {
        if self.bound == 0 || self.sigma == 0.0 {
            return 0;
        }
        let two_var = 2.0 * self.sigma * self.sigma;
        loop {
            let x = rng.gen_range(-self.bound..=self.bound);
            let xf = x as f64;
            if rng.gen::<f64>() < (-xf * xf / two_var).exp() {
                return x;
            }
        }
    }
}
