//! Gaussian approximations to the canonical variational posterior.
//!
//! [`classic_update`] expands `J` to second order at `γ` and fails when the
//! curvature there is convex. [`uhgf_update`] instead combines
//!
//! * `L₁`: an expansion at `γ` whose precision uses the concave energy `K`,
//! * `L₂`: an expansion at the Lambert-W approximation of the second mode,
//!
//! weighting them by the exact energy at their means and collapsing the
//! resulting two-component mixture onto a single Gaussian by moment matching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{energy_j, CanonicalParams};
pub use crate::gaussian::Gaussian;
use crate::special::{sigmoid, w0_of_exp};

/// The classic update produced a non-positive precision.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("posterior precision {pi} is not positive")]
pub struct NegativePrecision {
    pub pi: f64,
}

/// One quadratic expansion of the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub mu: f64,
    pub pi: f64,
    /// Where the expansion was taken.
    pub point: f64,
    /// Precision came from the concave energy because the full curvature
    /// at `point` was not negative.
    pub used_fallback: bool,
}

impl Expansion {
    pub fn gaussian(&self) -> Gaussian {
        Gaussian::new(self.mu, self.pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    /// Weight of the second expansion.
    pub b: f64,
    pub x_star: f64,
    pub expansions: [Expansion; 2],
    /// Precision the classic update would have produced.
    pub classic_pi: f64,
    pub classic_failed: bool,
}

/// Second-order expansion of `J` at `γ`.
pub fn classic_update(p: &CanonicalParams) -> Result<Gaussian, NegativePrecision> {
    let tr = p.transition(p.gamma());
    let delta = tr.delta(p.beta());
    let pi = 0.5 * tr.full_curvature(delta) + 0.5;
    if pi <= 0.0 || pi.is_nan() {
        return Err(NegativePrecision { pi });
    }
    Ok(Gaussian::new(p.gamma() + tr.w / (2.0 * pi) * delta, pi))
}

/// Expansion at `γ` with the concave curvature `-K''(γ)`.
pub fn expansion_l1(p: &CanonicalParams) -> Expansion {
    let tr = p.transition(p.gamma());
    let pi = 0.5 * tr.concave_curvature() + 0.5;
    Expansion {
        mu: p.gamma() + tr.w / (2.0 * pi) * tr.delta(p.beta()),
        pi,
        point: p.gamma(),
        used_fallback: false,
    }
}

/// Mode of `J` in the limit `α → 0`: `x* = γ - 1 + W₀(β e^{1-γ})`.
///
/// `beta` must be positive.
pub fn canonical_mode(beta: f64, gamma: f64) -> f64 {
    gamma - 1.0 + w0_of_exp(beta.ln() + 1.0 - gamma)
}

/// Newton-corrected expansion at [`canonical_mode`].
pub fn expansion_l2(p: &CanonicalParams) -> Expansion {
    let x_star = canonical_mode(p.beta(), p.gamma());
    let tr = p.transition(x_star);
    let delta = tr.delta(p.beta());
    let full = 0.5 * tr.full_curvature(delta) + 0.5;
    let (pi, used_fallback) = if full > 0.0 {
        (full, false)
    } else {
        (0.5 * tr.concave_curvature() + 0.5, true)
    };
    let grad = 0.5 * tr.w * delta - 0.5 * (x_star - p.gamma());
    Expansion {
        mu: x_star + grad / pi,
        pi,
        point: x_star,
        used_fallback,
    }
}

/// Weight of `e2` in the blend: `1 / (1 + exp(J(μ₁) - J(μ₂)))`.
pub fn blend_weight(p: &CanonicalParams, e1: &Expansion, e2: &Expansion) -> f64 {
    blend_weights(energy_j(e1.mu, p), energy_j(e2.mu, p))[1]
}

/// Both blend weights, each computed directly so that a weight near zero
/// keeps full relative precision instead of being formed as `1 - b`.
pub(crate) fn blend_weights(first: f64, second: f64) -> [f64; 2] {
    let d = second - first;
    if d.is_nan() {
        // both expansions sit infinitely far down the energy
        [0.5, 0.5]
    } else {
        [sigmoid(-d), sigmoid(d)]
    }
}

/// Single Gaussian with the mean and variance of
/// `(1 - b)·N(μ₁, 1/π₁) + b·N(μ₂, 1/π₂)`.
pub fn moment_match(e1: &Expansion, e2: &Expansion, b: f64) -> Gaussian {
    moment_match_weighted(&[*e1, *e2], &[1.0 - b, b])
}

/// Moment-matched Gaussian of a weighted mixture of expansions. The
/// between-component variance is summed pairwise, `Σᵢ<ⱼ wᵢwⱼ(μᵢ - μⱼ)²`,
/// which avoids cancellation against the mixture mean.
pub(crate) fn moment_match_weighted(components: &[Expansion], weights: &[f64]) -> Gaussian {
    let mut mu = 0.0;
    let mut var = 0.0;
    for (i, (ei, &wi)) in components.iter().zip(weights).enumerate() {
        if wi <= 0.0 {
            continue;
        }
        mu += wi * ei.mu;
        var += wi / ei.pi;
        for (ej, &wj) in components[i + 1..].iter().zip(&weights[i + 1..]) {
            if wj > 0.0 {
                let d = ei.mu - ej.mu;
                var += wi * wj * d * d;
            }
        }
    }
    Gaussian::new(mu, 1.0 / var)
}

/// The positivity-preserving update. Total on the valid parameter domain.
pub fn uhgf_update(p: &CanonicalParams) -> (Gaussian, UpdateDiagnostics) {
    let l1 = expansion_l1(p);
    let l2 = expansion_l2(p);
    let weights = blend_weights(energy_j(l1.mu, p), energy_j(l2.mu, p));
    let b = weights[1];
    let posterior = moment_match_weighted(&[l1, l2], &weights);
    let (classic_pi, classic_failed) = match classic_update(p) {
        Ok(g) => (g.pi, false),
        Err(e) => (e.pi, true),
    };
    let diagnostics = UpdateDiagnostics {
        b,
        x_star: l2.point,
        expansions: [l1, l2],
        classic_pi,
        classic_failed,
    };
    (posterior, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{grad_j, hess_j, hess_k};

    fn params(a: f64, b: f64, g: f64) -> CanonicalParams {
        CanonicalParams::new(a, b, g).unwrap()
    }

    #[test]
    fn classic_examples() {
        let g = classic_update(&params(1.0, 1.0, 0.0)).unwrap();
        assert!((g.mu + 0.2).abs() < 1e-15);
        assert!((g.pi - 0.625).abs() < 1e-15);

        let err = classic_update(&params(0.005, 1.0, -6.0)).unwrap_err();
        assert!((err.pi + 6.859_389_039_933_413).abs() < 1e-12);

        let gamma: f64 = -1.3;
        let g = classic_update(&params(0.2, 0.2 + gamma.exp(), gamma)).unwrap();
        assert!((g.mu - gamma).abs() < 1e-14);
    }

    #[test]
    fn l1_examples() {
        let e = expansion_l1(&params(0.005, 1.0, -6.0));
        assert!((e.pi - 0.610_793_640_482_727_9).abs() < 1e-14);
        assert!((e.mu - 30.007_264_979_346_66).abs() < 1e-11);
        assert_eq!(e.point, -6.0);
        assert!(!e.used_fallback);

        let e = expansion_l1(&params(1.0, 1.0, 0.0));
        assert!((e.pi - 0.625).abs() < 1e-15);
        assert!((e.mu + 0.2).abs() < 1e-15);

        let gamma: f64 = 2.5;
        let e = expansion_l1(&params(3.0, 3.0 + gamma.exp(), gamma));
        assert!((e.mu - gamma).abs() < 1e-14);
    }

    #[test]
    fn mode_examples() {
        let omega = 0.567_143_290_409_783_8;
        assert!((canonical_mode(1.0, 1.0) - omega).abs() < 1e-15);
        assert!((canonical_mode(1.0, -6.0) + 1.672_821_698_628_906_6).abs() < 1e-13);
        let e = std::f64::consts::E;
        let x = canonical_mode(e, 1.0);
        assert!((e * (-x).exp() - (1.0 + x - 1.0)).abs() <= 1e-9);
    }

    #[test]
    fn l2_examples() {
        let e = expansion_l2(&params(0.005, 1.0, -6.0));
        assert!(!e.used_fallback);
        assert!((e.pi - 2.908_671_276_938_483).abs() < 1e-12);
        assert!((e.mu + 1.715_262_849_856_130_5).abs() < 1e-12);
        assert!((e.point + 1.672_821_698_628_906_6).abs() < 1e-13);
    }

    #[test]
    fn l2_tracks_the_mode_without_surprise() {
        let gamma: f64 = 12.0;
        let alpha = 0.01;
        let p = params(alpha, alpha + gamma.exp(), gamma);
        let e = expansion_l2(&p);
        // Newton iteration on grad_j from gamma locates argmax J
        let mut x = gamma;
        for _ in 0..50 {
            x -= grad_j(x, &p) / hess_j(x, &p);
        }
        assert!((e.mu - x).abs() <= 1e-3);
        assert!((e.mu - gamma).abs() <= 1e-3);
    }

    #[test]
    fn l2_fallback_is_concave_curvature() {
        // Constructed so that x* = 0 lands in the convex transition zone
        // with w(x*) = 0.3 and δ(x*) = 20: β e^{-x*} = 70 = 1 + x* - γ.
        let p = params(7.0 / 3.0, 70.0, -69.0);
        let e = expansion_l2(&p);
        assert!(e.point.abs() < 1e-12);
        assert!(hess_j(e.point, &p) > 0.0);
        assert!(e.used_fallback);
        assert!((0.5..=0.625).contains(&e.pi));
        assert!((e.pi + hess_k(e.point, &p)).abs() < 1e-15);
        let (g, _) = uhgf_update(&p);
        assert!(g.pi > 0.0);
    }

    #[test]
    fn blend_examples() {
        let e = Expansion {
            mu: 0.3,
            pi: 1.0,
            point: 0.0,
            used_fallback: false,
        };
        let p = params(1.0, 1.0, 0.0);
        assert_eq!(blend_weight(&p, &e, &e), 0.5);

        let p = params(0.005, 1.0, -6.0);
        let b = blend_weight(&p, &expansion_l1(&p), &expansion_l2(&p));
        assert!(b > 0.99);

        // L1 dominates when the second expansion sits on the far flank
        let p = params(1.0, 1.0, 0.0);
        let far = Expansion {
            mu: 8.0,
            pi: 1.0,
            point: 8.0,
            used_fallback: false,
        };
        assert!(blend_weight(&p, &expansion_l1(&p), &far) < 1e-6);
    }

    #[test]
    fn moment_match_examples() {
        let e1 = Expansion {
            mu: 0.0,
            pi: 1.0,
            point: 0.0,
            used_fallback: false,
        };
        let e2 = Expansion {
            mu: 2.0,
            pi: 1.0,
            point: 2.0,
            used_fallback: false,
        };
        let g = moment_match(&e1, &e2, 0.5);
        assert!((g.mu - 1.0).abs() < 1e-15);
        assert!((g.pi - 0.5).abs() < 1e-15);
        assert_eq!(moment_match(&e1, &e2, 0.0), e1.gaussian());
        assert_eq!(moment_match(&e1, &e2, 1.0), e2.gaussian());
    }

    #[test]
    fn uhgf_examples() {
        let (g, d) = uhgf_update(&params(0.005, 1.0, -6.0));
        assert!(g.pi > 0.0);
        assert!(d.classic_failed);
        assert!(d.b > 0.99);

        // no surprise: x* sits within alpha·e^{-gamma} of gamma and the
        // Newton step lands on it
        let gamma: f64 = 2.0;
        let alpha = 1e-6;
        let (g, _) = uhgf_update(&params(alpha, alpha + gamma.exp(), gamma));
        assert!((g.mu - gamma).abs() < 1e-9);
    }

    #[test]
    fn equal_expansions_give_even_weight() {
        // at (1, 1, 0) the mode x* coincides with gamma, so L2 reproduces L1
        let (g, d) = uhgf_update(&params(1.0, 1.0, 0.0));
        assert_eq!(d.x_star, 0.0);
        assert_eq!(d.b, 0.5);
        assert!((g.mu + 0.2).abs() < 1e-15);
        assert!((g.pi - 0.625).abs() < 1e-15);
    }

    #[test]
    fn classic_fails_only_near_log_alpha() {
        let mut failures = Vec::new();
        for i in 0..=800 {
            let gamma = -40.0 + 0.1 * i as f64;
            if classic_update(&params(0.005, 1.0, gamma)).is_err() {
                failures.push(gamma);
            }
            assert!(classic_update(&params(1.0, 1.0, gamma)).is_ok());
        }
        assert!(!failures.is_empty());
        // one contiguous band just below log(alpha)
        assert!(failures.windows(2).all(|w| (w[1] - w[0] - 0.1).abs() < 1e-9));
        let ln_alpha = 0.005f64.ln();
        assert!(*failures.last().unwrap() < ln_alpha);
        assert!(failures[0] > ln_alpha - 6.0);
    }
}
