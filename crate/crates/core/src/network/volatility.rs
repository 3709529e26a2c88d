//! Volatility-parent updates in full (non-canonical) form.
//!
//! A volatility parent with prediction `(μ̂, π̂)` and children `i` has the
//! variational energy
//!
//! ```text
//! I(x) = Σᵢ [ -½ log(σᵢ⁰ + tᵢ e^{κᵢx + ω̃ᵢ}) - ½ βᵢ / (σᵢ⁰ + tᵢ e^{κᵢx + ω̃ᵢ}) ] - ½ π̂ (x - μ̂)²
//! ```
//!
//! which reduces to the canonical `J` for one child with `t = κ = 1`,
//! `ω̃ = 0` and `π̂ = ½`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{blend_weights, moment_match_weighted, Expansion, NegativePrecision, UpdateDiagnostics};
use crate::energy::Transition;
use crate::gaussian::Gaussian;
use crate::special::{log_sum_exp, w0_of_exp};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("invalid volatility update input: {field} = {value}")]
pub struct InvalidInput {
    pub field: &'static str,
    pub value: f64,
}

/// What one volatility child contributes to its parent's energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityChild {
    /// Time elapsed since the previous update.
    pub t: f64,
    /// Child's posterior variance before this step (σ†⁰).
    pub sigma_prev: f64,
    /// Coupling strength κ† (> 0).
    pub kappa: f64,
    /// Child's tonic volatility plus the frozen contributions of its other
    /// volatility parents.
    pub omega_eff: f64,
    /// Total posterior child uncertainty `σ† + (μ† - μ̂†)²`.
    pub beta: f64,
}

impl VolatilityChild {
    pub fn validate(&self) -> Result<(), InvalidInput> {
        let positive = [
            ("t", self.t),
            ("sigma_prev", self.sigma_prev),
            ("kappa", self.kappa),
            ("beta", self.beta),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(InvalidInput { field, value });
            }
        }
        if !self.omega_eff.is_finite() {
            return Err(InvalidInput {
                field: "omega_eff",
                value: self.omega_eff,
            });
        }
        Ok(())
    }

    fn transition(&self, x: f64) -> Transition {
        Transition::at(self.sigma_prev, self.t.ln() + self.kappa * x + self.omega_eff)
    }

    /// `γ_c = log t + κ μ̂ + ω̃`, the prior mean in the child's log-variance scale.
    pub fn gamma_c(&self, mu_hat: f64) -> f64 {
        self.t.ln() + self.kappa * mu_hat + self.omega_eff
    }

    /// Approximate mode of the energy in the limit `σ⁰ → 0`, found in the
    /// child's log-variance scale and mapped back to the parent's.
    pub fn lambert_mode(&self, prior: &Gaussian) -> f64 {
        let pi_y = prior.pi / (self.kappa * self.kappa);
        let shift = 1.0 / (2.0 * pi_y);
        let gamma_c = self.gamma_c(prior.mu);
        let ell = self.beta.ln() - (2.0 * pi_y).ln() + shift - gamma_c;
        let y_star = gamma_c - shift + w0_of_exp(ell);
        (y_star - self.t.ln() - self.omega_eff) / self.kappa
    }
}

/// Per-x evaluations of one child term.
#[derive(Debug, Clone, Copy)]
struct TermAt {
    energy: f64,
    grad: f64,
    /// `-d²/dx²` of the term.
    curvature: f64,
    /// `-d²/dx²` of the log-normaliser part alone.
    concave_curvature: f64,
}

fn term_at(child: &VolatilityChild, x: f64) -> TermAt {
    let tr = child.transition(x);
    let ratio = tr.ratio(child.beta);
    let delta = ratio - 1.0;
    let half_k2 = 0.5 * child.kappa * child.kappa;
    TermAt {
        energy: -0.5 * tr.log_s - 0.5 * ratio,
        grad: 0.5 * child.kappa * tr.w * delta,
        curvature: half_k2 * tr.full_curvature(delta),
        concave_curvature: half_k2 * tr.concave_curvature(),
    }
}

/// The full variational energy of a volatility parent.
#[derive(Debug, Clone, Copy)]
pub struct VolatilityEnergy<'a> {
    pub prior: Gaussian,
    pub children: &'a [VolatilityChild],
}

impl VolatilityEnergy<'_> {
    pub fn energy(&self, x: f64) -> f64 {
        let d = x - self.prior.mu;
        self.children.iter().map(|c| term_at(c, x).energy).sum::<f64>() - 0.5 * self.prior.pi * d * d
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.child_grad(x) - self.prior.pi * (x - self.prior.mu)
    }

    pub fn hess(&self, x: f64) -> f64 {
        -self.prior.pi - self.children.iter().map(|c| term_at(c, x).curvature).sum::<f64>()
    }

    /// Second derivative of the concave part (all log-normalisers plus the
    /// prior); strictly below `-π̂`.
    pub fn concave_hess(&self, x: f64) -> f64 {
        -self.prior.pi
            - self
                .children
                .iter()
                .map(|c| term_at(c, x).concave_curvature)
                .sum::<f64>()
    }

    fn child_grad(&self, x: f64) -> f64 {
        self.children.iter().map(|c| term_at(c, x).grad).sum()
    }

    fn child_curvature(&self, x: f64) -> f64 {
        self.children.iter().map(|c| term_at(c, x).curvature).sum()
    }

    fn child_concave_curvature(&self, x: f64) -> f64 {
        self.children.iter().map(|c| term_at(c, x).concave_curvature).sum()
    }

    /// Expansion at the prior mean with concave curvature.
    fn expansion_l1(&self) -> Expansion {
        let x = self.prior.mu;
        let pi = self.prior.pi + self.child_concave_curvature(x);
        Expansion {
            mu: x + self.child_grad(x) / pi,
            pi,
            point: x,
            used_fallback: false,
        }
    }

    /// Newton-corrected expansion at `point`, falling back to the concave
    /// curvature where the full one is not negative.
    fn expansion_at(&self, point: f64) -> Expansion {
        let full = self.prior.pi + self.child_curvature(point);
        let (pi, used_fallback) = if full > 0.0 {
            (full, false)
        } else {
            (self.prior.pi + self.child_concave_curvature(point), true)
        };
        let grad = self.child_grad(point) - self.prior.pi * (point - self.prior.mu);
        Expansion {
            mu: point + grad / pi,
            pi,
            point,
            used_fallback,
        }
    }

    fn classic(&self) -> Result<Gaussian, NegativePrecision> {
        let x = self.prior.mu;
        let pi = self.prior.pi + self.child_curvature(x);
        if pi <= 0.0 || pi.is_nan() {
            return Err(NegativePrecision { pi });
        }
        Ok(Gaussian::new(x + self.child_grad(x) / pi, pi))
    }
}

/// Inputs of a single-child volatility update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityUpdateInput {
    pub t: f64,
    pub sigma_child_prev: f64,
    pub kappa: f64,
    pub omega_eff: f64,
    pub beta: f64,
    pub mu_hat: f64,
    pub pi_hat: f64,
}

impl VolatilityUpdateInput {
    pub fn child(&self) -> VolatilityChild {
        VolatilityChild {
            t: self.t,
            sigma_prev: self.sigma_child_prev,
            kappa: self.kappa,
            omega_eff: self.omega_eff,
            beta: self.beta,
        }
    }

    pub fn prior(&self) -> Gaussian {
        Gaussian::new(self.mu_hat, self.pi_hat)
    }

    pub fn validate(&self) -> Result<(), InvalidInput> {
        validate_prior(&self.prior())?;
        self.child().validate()
    }
}

fn validate_prior(prior: &Gaussian) -> Result<(), InvalidInput> {
    if !prior.mu.is_finite() {
        return Err(InvalidInput {
            field: "mu_hat",
            value: prior.mu,
        });
    }
    if !(prior.pi.is_finite() && prior.pi > 0.0) {
        return Err(InvalidInput {
            field: "pi_hat",
            value: prior.pi,
        });
    }
    Ok(())
}

/// Classic one-step volatility update; fails with the offending precision
/// when the energy is convex at the prior mean.
pub fn volatility_update_classic(input: &VolatilityUpdateInput) -> Result<Gaussian, NegativePrecision> {
    let child = [input.child()];
    VolatilityEnergy {
        prior: input.prior(),
        children: &child,
    }
    .classic()
}

/// Classic update against several volatility children at once.
pub fn volatility_update_classic_multi(
    prior: Gaussian,
    children: &[VolatilityChild],
) -> Result<Gaussian, NegativePrecision> {
    VolatilityEnergy { prior, children }.classic()
}

fn finite_or(x: f64, fallback: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        fallback
    }
}

/// Positivity-preserving volatility update for a single child.
pub fn volatility_update_uhgf(input: &VolatilityUpdateInput) -> (Gaussian, UpdateDiagnostics) {
    let prior = input.prior();
    let child = input.child();
    let children = [child];
    let energy = VolatilityEnergy {
        prior,
        children: &children,
    };
    let l1 = energy.expansion_l1();
    let x_star = finite_or(child.lambert_mode(&prior), prior.mu);
    let l2 = energy.expansion_at(x_star);
    let weights = blend_weights(energy.energy(l1.mu), energy.energy(l2.mu));
    let b = weights[1];
    let posterior = moment_match_weighted(&[l1, l2], &weights);
    let (classic_pi, classic_failed) = match energy.classic() {
        Ok(g) => (g.pi, false),
        Err(e) => (e.pi, true),
    };
    (
        posterior,
        UpdateDiagnostics {
            b,
            x_star,
            expansions: [l1, l2],
            classic_pi,
            classic_failed,
        },
    )
}

/// Diagnostics of an update with `n` volatility children and `n + 1`
/// expansions. Index 0 is the expansion at the prior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDiagnostics {
    pub weights: Vec<f64>,
    pub x_stars: Vec<f64>,
    pub expansions: Vec<Expansion>,
    pub classic_pi: f64,
    pub classic_failed: bool,
}

impl MultiDiagnostics {
    /// Total weight on the mode expansions.
    pub fn mode_weight(&self) -> f64 {
        self.weights[1..].iter().sum()
    }

    /// Mode location of the most heavily weighted mode expansion.
    pub fn dominant_x_star(&self) -> f64 {
        let (i, _) =
            self.weights[1..].iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc },
            );
        self.x_stars[i]
    }

    pub fn any_fallback(&self) -> bool {
        self.expansions.iter().any(|e| e.used_fallback)
    }
}

/// Moment-matched Gaussian of a weighted mixture of expansions.
pub fn moment_match_many(components: &[Expansion], weights: &[f64]) -> Gaussian {
    moment_match_weighted(components, weights)
}

/// Normalised exponentials of `log_weights`. Two weights are formed as
/// complementary logistic functions, matching the single-child blend.
fn softmax(log_weights: &[f64]) -> Vec<f64> {
    if let [first, second] = *log_weights {
        return blend_weights(first, second).to_vec();
    }
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        let n = log_weights.len() as f64;
        return vec![1.0 / n; log_weights.len()];
    }
    log_weights.iter().map(|l| (l - lse).exp()).collect()
}

/// Positivity-preserving update against `n ≥ 1` volatility children: one
/// concave expansion at the prior mean, one Newton-corrected expansion at
/// each child's Lambert-W mode (all using the full energy), softmax weights
/// from the energy at each expansion mean, then moment matching.
pub fn volatility_update_multi(prior: Gaussian, children: &[VolatilityChild]) -> (Gaussian, MultiDiagnostics) {
    assert!(!children.is_empty(), "volatility update needs at least one child");
    let energy = VolatilityEnergy { prior, children };
    let x_stars: Vec<f64> = children
        .iter()
        .map(|c| finite_or(c.lambert_mode(&prior), prior.mu))
        .collect();
    let mut expansions = Vec::with_capacity(children.len() + 1);
    expansions.push(energy.expansion_l1());
    expansions.extend(x_stars.iter().map(|&x| energy.expansion_at(x)));
    let log_weights: Vec<f64> = expansions.iter().map(|e| energy.energy(e.mu)).collect();
    let weights = softmax(&log_weights);
    let posterior = moment_match_many(&expansions, &weights);
    let (classic_pi, classic_failed) = match energy.classic() {
        Ok(g) => (g.pi, false),
        Err(e) => (e.pi, true),
    };
    (
        posterior,
        MultiDiagnostics {
            weights,
            x_stars,
            expansions,
            classic_pi,
            classic_failed,
        },
    )
}
