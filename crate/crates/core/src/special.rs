//! Scalar special functions: the principal branch of the Lambert W function
//! (with an overflow-free log-domain entry point) and stable logistic helpers.

use thiserror::Error;

/// Raised when a special function is called outside its real domain.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("{function}: argument {value} is outside the domain")]
pub struct DomainError {
    pub function: &'static str,
    pub value: f64,
}

const HALLEY_MAX_ITER: usize = 20;
const HALLEY_TOL: f64 = 1e-15;

/// Above this, `lambert_w0` hands over to the log-domain iteration so that
/// `exp(w)` is never evaluated near the overflow threshold.
const DIRECT_LIMIT: f64 = 1e300;

/// Log-domain argument `ell` standing for `z = exp(ell)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogArg(f64);

impl LogArg {
    pub fn new(ell: f64) -> Result<Self, DomainError> {
        if ell.is_finite() {
            Ok(Self(ell))
        } else {
            Err(DomainError {
                function: "LogArg::new",
                value: ell,
            })
        }
    }

    pub fn ell(self) -> f64 {
        self.0
    }
}

/// Principal branch W₀(z) on the non-negative reals, by Halley iteration.
pub fn lambert_w0(z: f64) -> Result<f64, DomainError> {
    if z.is_nan() || z < 0.0 {
        return Err(DomainError {
            function: "lambert_w0",
            value: z,
        });
    }
    if z == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(w0_nonneg(z))
}

/// W₀(exp(ell)) without materialising `exp(ell)`.
pub fn lambert_w0_of_exp(arg: LogArg) -> f64 {
    w0_of_exp(arg.ell())
}

pub(crate) fn w0_nonneg(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if z > DIRECT_LIMIT {
        return w0_of_exp(z.ln());
    }
    let seed = if z > std::f64::consts::E * std::f64::consts::E {
        let ell = z.ln();
        ell - ell.ln()
    } else if z < 0.25 {
        z * (1.0 - z)
    } else {
        z.ln_1p()
    };
    halley_direct(z, seed)
}

pub(crate) fn w0_of_exp(ell: f64) -> f64 {
    if ell <= 2.0 {
        return w0_nonneg(ell.exp());
    }
    halley_log(ell, ell - ell.ln())
}

// f(w) = w e^w - z
fn halley_direct(z: f64, mut w: f64) -> f64 {
    for _ in 0..HALLEY_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= HALLEY_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

// g(w) = w + ln w - ell, valid for w > 0 (ell > 1)
fn halley_log(ell: f64, mut w: f64) -> f64 {
    for _ in 0..HALLEY_MAX_ITER {
        let g = w + w.ln() - ell;
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let step = g / (g1 - g * g2 / (2.0 * g1));
        w -= step;
        if step.abs() <= HALLEY_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Logistic function `1 / (1 + exp(-d))`, saturating cleanly at ±∞.
pub fn stable_sigmoid(d: f64) -> Result<f64, DomainError> {
    if d.is_nan() {
        return Err(DomainError {
            function: "stable_sigmoid",
            value: d,
        });
    }
    Ok(sigmoid(d))
}

pub(crate) fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `log Σ exp(xᵢ)`; `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn w0_examples() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        let omega = bisect(|w| w * w.exp() - 1.0, 0.0, 1.0);
        assert!((omega - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w0(1.0).unwrap() - omega).abs() < 1e-15);
    }

    #[test]
    fn w0_rejects_bad_input() {
        assert!(lambert_w0(-1e-3).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
        assert!(LogArg::new(f64::INFINITY).is_err());
        assert!(LogArg::new(f64::NAN).is_err());
    }

    #[test]
    fn w0_of_exp_examples() {
        let w = |ell: f64| lambert_w0_of_exp(LogArg::new(ell).unwrap());
        assert!((w(1.0) - 1.0).abs() < 1e-15);
        let w7 = bisect(|u| u + u.ln() - 7.0, 1.0, 10.0);
        assert!((w7 - 5.327_178_301_371_093).abs() < 1e-13);
        assert!((w(7.0) - w7).abs() < 1e-13);
        let w500 = bisect(|u| u + u.ln() - 500.0, 1.0, 500.0);
        assert!((w(500.0) - w500).abs() < 1e-11);
        assert!((w(500.0) - 493.797_873_729_033_7).abs() < 1e-9);
        assert!(w(700.0).is_finite() && w(-700.0) >= 0.0);
    }

    #[test]
    fn tiny_arguments_are_relatively_accurate() {
        for &z in &[1e-300, 1e-100, 1e-20, 1e-8] {
            let w = lambert_w0(z).unwrap();
            assert!(((w * w.exp()) - z).abs() <= 1e-15 * z, "z={z}");
        }
    }

    #[test]
    fn huge_arguments_do_not_overflow() {
        let w = lambert_w0(f64::MAX).unwrap();
        assert!(w.is_finite());
        assert!((w + w.ln() - f64::MAX.ln()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(stable_sigmoid(0.0).unwrap(), 0.5);
        assert_eq!(stable_sigmoid(1000.0).unwrap(), 1.0);
        assert_eq!(stable_sigmoid(-1000.0).unwrap(), 0.0);
        assert!((stable_sigmoid(3f64.ln()).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(stable_sigmoid(f64::INFINITY).unwrap(), 1.0);
        assert_eq!(stable_sigmoid(f64::NEG_INFINITY).unwrap(), 0.0);
        assert!(stable_sigmoid(f64::NAN).is_err());
    }

    #[test]
    fn softplus_and_lse() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-16);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sigmoid_is_symmetric(d in -800.0f64..800.0) {
            let s = sigmoid(d) + sigmoid(-d);
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn w0_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lambert_w0(lo).unwrap() <= lambert_w0(hi).unwrap());
        }

        #[test]
        fn log_form_agrees(ell in -600.0f64..600.0) {
            let a = lambert_w0_of_exp(LogArg::new(ell).unwrap());
            let b = lambert_w0(ell.exp()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE));
        }
    }
}
