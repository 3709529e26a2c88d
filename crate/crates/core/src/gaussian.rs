use serde::{Deserialize, Serialize};

/// A Gaussian in (mean, precision) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: f64,
    pub pi: f64,
}

impl Gaussian {
    pub fn new(mu: f64, pi: f64) -> Self {
        Self { mu, pi }
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.pi
    }

    /// Log density at `x`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let d = x - self.mu;
        0.5 * (self.pi / (2.0 * std::f64::consts::PI)).ln() - 0.5 * self.pi * d * d
    }
}
