//! KL divergence of the classic and uHGF approximations from the
//! quadrature posterior over a grid of canonical parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uhgf_core::energy::energy_j;
use uhgf_core::oracle::{auto_window, kl_divergence, normalize_posterior, QuadratureSpec};
use uhgf_core::{classic_update, uhgf_update, CanonicalParams, Gaussian};

use crate::report::{opt_field, SCHEMA_VERSION};
use crate::HarnessError;

pub const KL_GRID_CSV_HEADER: &str = "beta_over_alpha,gamma,classic_status,classic_kl,uhgf_kl";

/// `n` values spaced uniformly in log between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// `n` values spaced uniformly between `lo` and `hi` inclusive.
pub fn lin_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlGridConfig {
    pub alpha: f64,
    /// `β/α` values.
    pub ratios: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Convergence tolerance on the quadrature log normaliser.
    pub refine_tol: f64,
}

impl Default for KlGridConfig {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            ratios: log_spaced(1.0, 200.0, 8),
            gammas: lin_spaced(-15.0, 15.0, 61),
            refine_tol: QuadratureSpec::DEFAULT_REFINE_TOL,
        }
    }
}

impl KlGridConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(HarnessError::config(format!(
                "kl_grid.alpha = {} must be positive",
                self.alpha
            )));
        }
        if self.ratios.is_empty() || self.gammas.is_empty() {
            return Err(HarnessError::config("kl_grid needs at least one ratio and one gamma"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(HarnessError::config(format!("kl_grid ratio {r} must be positive")));
        }
        if let Some(g) = self.gammas.iter().find(|g| !g.is_finite()) {
            return Err(HarnessError::config(format!("kl_grid gamma {g} must be finite")));
        }
        if !(self.refine_tol.is_finite() && self.refine_tol > 0.0) {
            return Err(HarnessError::config(format!(
                "kl_grid.refine_tol = {} must be positive",
                self.refine_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    NegativePrecision,
    QuadratureError,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::NegativePrecision => "negative_precision",
            CellStatus::QuadratureError => "quadrature_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlCell {
    pub beta_over_alpha: f64,
    pub gamma: f64,
    pub classic_status: CellStatus,
    pub classic_pi: f64,
    pub classic_kl: Option<f64>,
    pub uhgf_status: CellStatus,
    pub uhgf_pi: f64,
    pub uhgf_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlGridSummary {
    pub schema_version: u32,
    pub alpha: f64,
    pub cells: usize,
    pub classic_failures: usize,
    pub classic_failure_rate: f64,
    pub uhgf_successes: usize,
    pub quadrature_failures: usize,
    /// Means over cells where the classic update succeeded.
    pub mean_classic_kl: f64,
    pub mean_uhgf_kl: f64,
    pub kl_ratio: f64,
    /// Mean and maximum uHGF KL over every cell with a quadrature result.
    pub mean_uhgf_kl_all: f64,
    pub max_uhgf_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlGridReport {
    pub cells: Vec<KlCell>,
    pub summary: KlGridSummary,
}

/// Evaluates one grid cell. Never fails; problems are recorded as statuses.
pub fn kl_cell(alpha: f64, ratio: f64, gamma: f64, refine_tol: f64) -> KlCell {
    let mut cell = KlCell {
        beta_over_alpha: ratio,
        gamma,
        classic_status: CellStatus::QuadratureError,
        classic_pi: f64::NAN,
        classic_kl: None,
        uhgf_status: CellStatus::QuadratureError,
        uhgf_pi: f64::NAN,
        uhgf_kl: None,
    };
    let Ok(p) = CanonicalParams::new(alpha, ratio * alpha, gamma) else {
        return cell;
    };
    let classic = classic_update(&p);
    let (uhgf, _) = uhgf_update(&p);
    cell.classic_pi = classic.as_ref().map_or_else(|e| e.pi, |g| g.pi);
    cell.uhgf_pi = uhgf.pi;
    let table = normalize_posterior(|x| energy_j(x, &p), &auto_window(&p).with_refine_tol(refine_tol)).ok();
    let assess = |q: &Gaussian| {
        let usable = q.pi.is_finite() && q.pi > 0.0 && q.mu.is_finite();
        match (&table, usable) {
            (_, false) => (CellStatus::NegativePrecision, None),
            (Some(t), true) => (CellStatus::Ok, Some(kl_divergence(t, q))),
            (None, true) => (CellStatus::QuadratureError, None),
        }
    };
    (cell.classic_status, cell.classic_kl) = match &classic {
        Ok(g) => assess(g),
        Err(_) => (CellStatus::NegativePrecision, None),
    };
    (cell.uhgf_status, cell.uhgf_kl) = assess(&uhgf);
    cell
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn run_kl_grid(cfg: &KlGridConfig) -> Result<KlGridReport, HarnessError> {
    cfg.validate()?;
    let coords: Vec<(f64, f64)> = cfg
        .ratios
        .iter()
        .flat_map(|&r| cfg.gammas.iter().map(move |&g| (r, g)))
        .collect();
    let cells: Vec<KlCell> = coords
        .par_iter()
        .map(|&(r, g)| kl_cell(cfg.alpha, r, g, cfg.refine_tol))
        .collect();
    Ok(KlGridReport {
        summary: summarize(cfg.alpha, &cells),
        cells,
    })
}

pub fn summarize(alpha: f64, cells: &[KlCell]) -> KlGridSummary {
    let classic_failures = cells
        .iter()
        .filter(|c| c.classic_status == CellStatus::NegativePrecision)
        .count();
    let paired: Vec<(f64, f64)> = cells.iter().filter_map(|c| Some((c.classic_kl?, c.uhgf_kl?))).collect();
    let mean_classic_kl = mean(paired.iter().map(|p| p.0));
    let mean_uhgf_kl = mean(paired.iter().map(|p| p.1));
    KlGridSummary {
        schema_version: SCHEMA_VERSION,
        alpha,
        cells: cells.len(),
        classic_failures,
        classic_failure_rate: classic_failures as f64 / cells.len() as f64,
        uhgf_successes: cells.iter().filter(|c| c.uhgf_status == CellStatus::Ok).count(),
        quadrature_failures: cells
            .iter()
            .filter(|c| c.classic_status == CellStatus::QuadratureError || c.uhgf_status == CellStatus::QuadratureError)
            .count(),
        mean_classic_kl,
        mean_uhgf_kl,
        kl_ratio: mean_classic_kl / mean_uhgf_kl,
        mean_uhgf_kl_all: mean(cells.iter().filter_map(|c| c.uhgf_kl)),
        max_uhgf_kl: cells.iter().filter_map(|c| c.uhgf_kl).fold(f64::NAN, f64::max),
    }
}

pub fn write_kl_csv<W: Write>(cells: &[KlCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{KL_GRID_CSV_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.beta_over_alpha,
            c.gamma,
            c.classic_status.as_str(),
            opt_field(c.classic_kl),
            opt_field(c.uhgf_kl)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let cfg = KlGridConfig::default();
        assert_eq!(cfg.ratios.len() * cfg.gammas.len(), 488);
        assert_eq!(cfg.ratios[0], 1.0);
        assert_eq!(cfg.ratios[7], 200.0);
        assert!(cfg.ratios.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(cfg.gammas[30], 0.0);
        assert_eq!(cfg.gammas[0], -15.0);
        assert_eq!(cfg.gammas[60], 15.0);
    }

    #[test]
    fn single_unit_cell() {
        let cfg = KlGridConfig {
            alpha: 1.0,
            ratios: vec![1.0],
            gammas: vec![0.0],
            ..KlGridConfig::default()
        };
        let report = run_kl_grid(&cfg).unwrap();
        let c = report.cells[0];
        assert_eq!(c.classic_status, CellStatus::Ok);
        assert_eq!(c.uhgf_status, CellStatus::Ok);
        assert!(c.classic_kl.unwrap() < 0.01 && c.uhgf_kl.unwrap() < 0.01);
        assert_eq!(report.summary.classic_failures, 0);
    }

    #[test]
    fn failing_cell_is_recorded_not_raised() {
        let c = kl_cell(0.005, 200.0, -6.0, 1e-9);
        assert_eq!(c.classic_status, CellStatus::NegativePrecision);
        assert!(c.classic_pi < 0.0 && c.classic_kl.is_none());
        assert_eq!(c.uhgf_status, CellStatus::Ok);
    }

    #[test]
    fn csv_layout() {
        let cells = [kl_cell(0.005, 200.0, -6.0, 1e-9)];
        let mut buf = Vec::new();
        write_kl_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(KL_GRID_CSV_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..4], &["200", "-6", "negative_precision", ""]);
        assert!(row[4].parse::<f64>().is_ok());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(run_kl_grid(&KlGridConfig {
            alpha: 0.0,
            ..KlGridConfig::default()
        })
        .is_err());
        assert!(run_kl_grid(&KlGridConfig {
            ratios: vec![],
            ..KlGridConfig::default()
        })
        .is_err());
    }
}
