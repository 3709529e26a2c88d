//! The canonical variational energy of a volatility parent,
//!
//! ```text
//! J(x) = -½ log(α + eˣ) - ½ β / (α + eˣ) - ¼ (x - γ)²
//! ```
//!
//! split into its three summands, together with the concave energy
//! `K = J₁ + J₃` obtained by dropping the convex-capable middle term.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::DomainError;

/// Exponents above this are handled in log space when forming `α + eˣ`.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ParamError {
    #[error("alpha must be positive and finite, got {0}")]
    Alpha(f64),
    #[error("beta must be positive and finite, got {0}")]
    Beta(f64),
    #[error("gamma must be finite, got {0}")]
    Gamma(f64),
}

/// The three parameters of the canonical energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl CanonicalParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ParamError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ParamError::Alpha(alpha));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(ParamError::Beta(beta));
        }
        if !gamma.is_finite() {
            return Err(ParamError::Gamma(gamma));
        }
        Ok(Self { alpha, beta, gamma })
    }

    /// Previous child variance.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Total posterior child uncertainty.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Predicted mean.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub(crate) fn transition(&self, x: f64) -> Transition {
        Transition::at(self.alpha, x)
    }
}

/// The sigmoid-like saturation `s = α + e^y` shared by `w`, `δ` and the
/// first two energy terms. One evaluation feeds all of them.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Transition {
    /// `e^y / s`
    pub w: f64,
    /// `α / s`, i.e. `1 - w` without cancellation
    pub w_c: f64,
    pub log_s: f64,
    s: Option<f64>,
}

impl Transition {
    pub(crate) fn at(alpha: f64, exponent: f64) -> Self {
        if exponent <= LOG_SPACE_THRESHOLD {
            let e = exponent.exp();
            let s = alpha + e;
            Self {
                w: e / s,
                w_c: alpha / s,
                log_s: s.ln(),
                s: Some(s),
            }
        } else {
            let z = exponent - alpha.ln();
            Self {
                w: crate::special::sigmoid(z),
                w_c: crate::special::sigmoid(-z),
                log_s: alpha.ln() + crate::special::softplus(z),
                s: None,
            }
        }
    }

    /// `β / s`
    pub(crate) fn ratio(&self, beta: f64) -> f64 {
        match self.s {
            Some(s) => beta / s,
            None => (beta.ln() - self.log_s).exp(),
        }
    }

    /// Volatility prediction error `β / s - 1`.
    pub(crate) fn delta(&self, beta: f64) -> f64 {
        self.ratio(beta) - 1.0
    }

    /// `w (w + (2w - 1) δ)`, the curvature factor of the full energy.
    pub(crate) fn full_curvature(&self, delta: f64) -> f64 {
        self.w * (self.w + (self.w - self.w_c) * delta)
    }

    /// `w (1 - w)`, the curvature factor of the concave energy.
    pub(crate) fn concave_curvature(&self) -> f64 {
        self.w * self.w_c
    }
}

fn check_x(function: &'static str, x: f64) -> Result<(), DomainError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(DomainError { function, value: x })
    }
}

fn check_positive(function: &'static str, v: f64) -> Result<(), DomainError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DomainError { function, value: v })
    }
}

/// `w(x) = eˣ / (α + eˣ)`.
pub fn weight_w(x: f64, alpha: f64) -> Result<f64, DomainError> {
    check_x("weight_w", x)?;
    check_positive("weight_w", alpha)?;
    Ok(Transition::at(alpha, x).w)
}

/// Volatility prediction error `δ(x) = β / (α + eˣ) - 1`.
pub fn vape_delta(x: f64, alpha: f64, beta: f64) -> Result<f64, DomainError> {
    check_x("vape_delta", x)?;
    check_positive("vape_delta", alpha)?;
    check_positive("vape_delta", beta)?;
    Ok(Transition::at(alpha, x).delta(beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyComponents {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.j1 + self.j2 + self.j3
    }
}

pub fn energy_components(x: f64, p: &CanonicalParams) -> EnergyComponents {
    let tr = p.transition(x);
    let dx = x - p.gamma;
    EnergyComponents {
        j1: -0.5 * tr.log_s,
        j2: -0.5 * tr.ratio(p.beta),
        j3: -0.25 * dx * dx,
    }
}

pub fn energy_j(x: f64, p: &CanonicalParams) -> f64 {
    energy_components(x, p).total()
}

pub fn grad_j(x: f64, p: &CanonicalParams) -> f64 {
    let tr = p.transition(x);
    0.5 * tr.w * tr.delta(p.beta) - 0.5 * (x - p.gamma)
}

pub fn hess_j(x: f64, p: &CanonicalParams) -> f64 {
    let tr = p.transition(x);
    -0.5 * tr.full_curvature(tr.delta(p.beta)) - 0.5
}

/// Concave energy `K = J₁ + J₃`.
pub fn energy_k(x: f64, p: &CanonicalParams) -> f64 {
    let c = energy_components(x, p);
    c.j1 + c.j3
}

pub fn grad_k(x: f64, p: &CanonicalParams) -> f64 {
    -0.5 * p.transition(x).w - 0.5 * (x - p.gamma)
}

/// Always within `[-0.625, -0.5]`.
pub fn hess_k(x: f64, p: &CanonicalParams) -> f64 {
    -0.5 * p.transition(x).concave_curvature() - 0.5
}
