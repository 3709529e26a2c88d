//! Value-coupling updates. With linear coupling every term is quadratic in
//! the parent, so these updates are exact and always increase precision.

use serde::{Deserialize, Serialize};

use crate::gaussian::Gaussian;

/// Posterior of a state node after observing `u` through an input with
/// noise variance `input_variance`.
pub fn input_update(prediction: Gaussian, u: f64, input_variance: f64) -> Gaussian {
    let input_pi = 1.0 / input_variance;
    let pi = prediction.pi + input_pi;
    Gaussian::new(prediction.mu + input_pi / pi * (u - prediction.mu), pi)
}

/// Posterior of a value parent from one child's prediction error
/// `child_pe = μ_a - μ̂_a` and predicted precision `child_pi_hat`.
pub fn value_parent_update(parent: Gaussian, child_pi_hat: f64, child_pe: f64, alpha: f64) -> Gaussian {
    let pi = parent.pi + alpha * alpha * child_pi_hat;
    Gaussian::new(parent.mu + alpha * child_pi_hat / pi * child_pe, pi)
}

/// One value child's quadratic term `-½ π̂ α² t² (x - c)²` in its parent's
/// energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueChild {
    pub pi_hat: f64,
    pub alpha: f64,
    /// Parent value at which the child's prediction error would vanish.
    pub target: f64,
}

impl ValueChild {
    /// Summary of a child with prediction error `pe`, linearised at the
    /// parent's prediction `parent_mu_hat`. Returns `None` for a decoupled
    /// child (`alpha · t = 0`).
    pub fn from_prediction_error(pi_hat: f64, alpha: f64, pe: f64, parent_mu_hat: f64, t: f64) -> Option<Self> {
        let slope = alpha * t;
        (slope != 0.0).then(|| Self {
            pi_hat,
            alpha,
            target: parent_mu_hat + pe / slope,
        })
    }
}

/// Folds linear value children into the parent's prediction:
/// `π̃ = π̂ + Σ π̂ⱼ αⱼ² t²` and the precision-weighted mean of `μ̂` and the
/// children's targets.
pub fn absorb_value_children(prior: Gaussian, t: f64, children: &[ValueChild]) -> Gaussian {
    absorb_quadratic_terms(
        prior,
        children
            .iter()
            .map(|c| (c.pi_hat * c.alpha * c.alpha * t * t, c.target)),
    )
}

/// Adds `-½ pᵢ (x - cᵢ)²` terms to a Gaussian prior.
pub(crate) fn absorb_quadratic_terms(prior: Gaussian, terms: impl Iterator<Item = (f64, f64)>) -> Gaussian {
    let mut pi = prior.pi;
    let mut weighted = 0.0;
    for (p, c) in terms {
        if p > 0.0 {
            pi += p;
            weighted += p * (c - prior.mu);
        }
    }
    Gaussian::new(prior.mu + weighted / pi, pi)
}
