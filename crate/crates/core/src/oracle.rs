//! Brute-force ground truth for the approximate updates.
//!
//! The unnormalised posterior `exp(E(x))` of any one-dimensional energy is
//! tabulated on a uniform grid and normalised with a log-space trapezoid
//! rule; moments and KL divergences are then read off the table. Nothing
//! here depends on the approximation code it is used to check.

use std::io::{self, Write};

use thiserror::Error;

use crate::energy::CanonicalParams;
use crate::gaussian::Gaussian;
use crate::special::{log_sum_exp, w0_of_exp};

/// Log densities below this contribute nothing to the KL sum.
const LOG_DENSITY_FLOOR: f64 = -745.0;
const MAX_REFINEMENTS: usize = 10;
const WINDOW_MARGIN: f64 = 12.0;
const MAX_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid quadrature window [{lo}, {hi}] with {n_points} points")]
    InvalidSpec { lo: f64, hi: f64, n_points: usize },
    #[error("energy is not finite at x = {x}")]
    NonFiniteEnergy { x: f64 },
    #[error("log normaliser did not settle: last change {achieved} > {requested}")]
    NotConverged { achieved: f64, requested: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    lo: f64,
    hi: f64,
    n_points: usize,
    refine_tol: f64,
}

impl QuadratureSpec {
    pub const DEFAULT_REFINE_TOL: f64 = 1e-9;

    pub fn new(lo: f64, hi: f64, n_points: usize, refine_tol: f64) -> Result<Self, QuadratureError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && n_points >= 64 && refine_tol > 0.0) {
            return Err(QuadratureError::InvalidSpec { lo, hi, n_points });
        }
        Ok(Self {
            lo,
            hi,
            n_points,
            refine_tol,
        })
    }

    /// Window `[min - margin, max + margin]` over `points` with grid step at
    /// most `max_step`.
    pub fn covering(points: &[f64], margin: f64, max_step: f64) -> Result<Self, QuadratureError> {
        let min = points.iter().copied().fold(f64::INFINITY, f64::min);
        let max = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = min - margin;
        let hi = max + margin;
        let n = ((hi - lo) / max_step).ceil();
        let n_points = if n.is_finite() { (n as usize + 1).max(64) } else { 0 };
        Self::new(lo, hi, n_points, Self::DEFAULT_REFINE_TOL)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn refine_tol(&self) -> f64 {
        self.refine_tol
    }

    pub fn with_refine_tol(mut self, refine_tol: f64) -> Self {
        self.refine_tol = refine_tol;
        self
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }
}

/// A normalised posterior tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    pub log_z: f64,
}

impl DensityTable {
    fn step(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    /// Trapezoid weights of the grid, in log space.
    fn log_weights(&self) -> impl Iterator<Item = f64> + '_ {
        let ln_h = self.step().ln();
        let last = self.grid.len() - 1;
        (0..self.grid.len()).map(move |i| {
            if i == 0 || i == last {
                ln_h - std::f64::consts::LN_2
            } else {
                ln_h
            }
        })
    }

    /// Trapezoid integral of `f(x) p(x)`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.log_density)
            .zip(self.log_weights())
            .map(|((&x, &lp), lw)| (lp + lw).exp() * f(x))
            .sum()
    }

    /// Total probability on the grid.
    pub fn mass(&self) -> f64 {
        self.expectation(|_| 1.0)
    }

    /// Grid points that are strict local maxima of the density.
    pub fn local_maxima(&self) -> Vec<f64> {
        self.log_density
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] && w[1] > w[2])
            .map(|(i, _)| self.grid[i + 1])
            .collect()
    }

    /// Writes `x,log_density` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,log_density")?;
        for (x, lp) in self.grid.iter().zip(&self.log_density) {
            writeln!(out, "{x},{lp}")?;
        }
        Ok(())
    }
}

fn tabulate(
    energy: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64), QuadratureError> {
    let h = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .collect();
    let mut values = Vec::with_capacity(n);
    for &x in &grid {
        let e = energy(x);
        if e.is_nan() || e == f64::INFINITY {
            return Err(QuadratureError::NonFiniteEnergy { x });
        }
        values.push(e);
    }
    let ln_h = h.ln();
    let weighted: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if i == 0 || i == n - 1 {
                e + ln_h - std::f64::consts::LN_2
            } else {
                e + ln_h
            }
        })
        .collect();
    let log_z = log_sum_exp(&weighted);
    Ok((grid, values, log_z))
}

/// Tabulates and normalises `exp(energy)` over the window of `spec`,
/// doubling the resolution until the log normaliser is stable to
/// `spec.refine_tol`.
pub fn normalize_posterior(
    energy: impl Fn(f64) -> f64,
    spec: &QuadratureSpec,
) -> Result<DensityTable, QuadratureError> {
    let mut n = spec.n_points;
    let (mut grid, mut values, mut log_z) = tabulate(&energy, spec.lo, spec.hi, n)?;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        n = 2 * n - 1;
        let (g, v, z) = tabulate(&energy, spec.lo, spec.hi, n)?;
        change = (z - log_z).abs();
        grid = g;
        values = v;
        log_z = z;
        if change <= spec.refine_tol {
            break;
        }
    }
    if change.is_nan() || change > spec.refine_tol || !log_z.is_finite() {
        return Err(QuadratureError::NotConverged {
            achieved: change,
            requested: spec.refine_tol,
        });
    }
    let log_density = values.into_iter().map(|e| e - log_z).collect();
    Ok(DensityTable {
        grid,
        log_density,
        log_z,
    })
}

/// Mean and variance of the tabulated posterior.
pub fn posterior_moments(table: &DensityTable) -> (f64, f64) {
    let mean = table.expectation(|x| x);
    let var = table.expectation(|x| (x - mean) * (x - mean));
    (mean, var)
}

/// `∫ p (log p - log q)` without clamping; small negative values reflect
/// quadrature error.
pub fn kl_divergence_unclamped(table: &DensityTable, q: &Gaussian) -> f64 {
    table
        .grid
        .iter()
        .zip(&table.log_density)
        .zip(table.log_weights())
        .filter(|((_, &lp), _)| lp > LOG_DENSITY_FLOOR)
        .map(|((&x, &lp), lw)| (lp + lw).exp() * (lp - q.ln_pdf(x)))
        .sum()
}

/// `D_KL(p ‖ q)` of the tabulated posterior `p` from a Gaussian `q`.
pub fn kl_divergence(table: &DensityTable, q: &Gaussian) -> f64 {
    kl_divergence_unclamped(table, q).max(0.0)
}

/// A window covering `γ` and the Lambert-W mode location, so that both
/// candidate modes of `J` and their quadratic tails lie inside.
pub fn auto_window(p: &CanonicalParams) -> QuadratureSpec {
    let x_star = p.gamma() - 1.0 + w0_of_exp(p.beta().ln() + 1.0 - p.gamma());
    QuadratureSpec::covering(&[p.gamma(), x_star], WINDOW_MARGIN, MAX_STEP).expect("window over finite points is valid")
}
