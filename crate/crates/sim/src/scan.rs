//! Coverage scan over (ω₁, ω₂): which parameter sets each update mode can
//! filter to completion with positive precisions throughout.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uhgf_core::network::{Network, NetworkSpec, Trajectory, TwoLevelConfig, UpdateMode};

use crate::report::SCHEMA_VERSION;
use crate::series::Series;
use crate::HarnessError;

pub const SCAN_CSV_HEADER: &str = "omega1,omega2,classic_ok,uhgf_ok,fail_step";

/// Inclusive evenly stepped range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    fn validate(&self, name: &str) -> Result<(), HarnessError> {
        let ok = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite() && self.step > 0.0;
        if !ok || self.stop < self.start {
            return Err(HarnessError::config(format!(
                "scan axis {name} needs finite start <= stop and a positive step"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values, rounded to 12 decimals so that e.g. −12.3 prints as
    /// such rather than as an accumulated binary neighbour.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub omega1: Axis,
    pub omega2: Axis,
    /// Fixed network parameters; the ω fields are overwritten per cell.
    pub network: TwoLevelConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScanConfig {
    /// 19 × 19 over [−16, 2]² with unit step.
    pub fn desk() -> Self {
        Self {
            omega1: Axis::new(-16.0, 2.0, 1.0),
            omega2: Axis::new(-16.0, 2.0, 1.0),
            network: TwoLevelConfig::default(),
        }
    }

    /// 181 × 181 over [−16, 2]² with step 0.1.
    pub fn full() -> Self {
        Self {
            omega1: Axis::new(-16.0, 2.0, 0.1),
            omega2: Axis::new(-16.0, 2.0, 0.1),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.omega1.validate("omega1")?;
        self.omega2.validate("omega2")?;
        let probe = TwoLevelConfig {
            omega1: self.omega1.start,
            omega2: self.omega2.start,
            ..self.network
        };
        Network::from_spec(&NetworkSpec::two_level(&probe))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub omega1: f64,
    pub omega2: f64,
    pub classic_ok: bool,
    pub uhgf_ok: bool,
    /// Step of the classic failure, if any.
    pub fail_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub schema_version: u32,
    pub omega1_points: usize,
    pub omega2_points: usize,
    pub cells: usize,
    pub classic_ok: usize,
    pub uhgf_ok: usize,
    pub classic_coverage: f64,
    pub uhgf_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Sorted by ω₁, then ω₂.
    pub cells: Vec<ScanCell>,
    pub summary: ScanSummary,
}

/// A run is usable when it completes and every recorded mean and precision
/// is finite, with precisions strictly positive.
pub fn run_is_usable(traj: &Trajectory) -> bool {
    traj.completed()
        && traj.steps.iter().all(|s| {
            s.nodes.iter().all(|r| {
                r.mu.is_finite()
                    && r.mu_hat.is_finite()
                    && r.pi.is_finite()
                    && r.pi_hat.is_finite()
                    && r.pi > 0.0
                    && r.pi_hat > 0.0
            })
        })
}

pub fn scan_cell(cfg: &ScanConfig, inputs: &[(f64, f64)], omega1: f64, omega2: f64) -> ScanCell {
    let net_cfg = TwoLevelConfig {
        omega1,
        omega2,
        ..cfg.network
    };
    let network = Network::from_spec(&NetworkSpec::two_level(&net_cfg)).expect("scan config validated");
    let run = |mode| network.filter_sequence(inputs, mode).expect("series validated");
    let classic = run(UpdateMode::Classic);
    let uhgf = run(UpdateMode::Uhgf);
    ScanCell {
        omega1,
        omega2,
        classic_ok: run_is_usable(&classic),
        uhgf_ok: run_is_usable(&uhgf),
        fail_step: classic.failure.as_ref().map(|f| f.step),
    }
}

/// Runs every cell on the current rayon pool. Results do not depend on the
/// pool size: each cell is an independent pure computation and the output
/// keeps grid order.
pub fn run_param_scan(cfg: &ScanConfig, series: &Series) -> Result<ScanReport, HarnessError> {
    cfg.validate()?;
    if series.is_empty() {
        return Err(HarnessError::config("scan series is empty"));
    }
    let inputs = series.inputs();
    let w1 = cfg.omega1.values();
    let w2 = cfg.omega2.values();
    let coords: Vec<(f64, f64)> = w1.iter().flat_map(|&a| w2.iter().map(move |&b| (a, b))).collect();
    let cells: Vec<ScanCell> = coords.par_iter().map(|&(a, b)| scan_cell(cfg, &inputs, a, b)).collect();
    let classic_ok = cells.iter().filter(|c| c.classic_ok).count();
    let uhgf_ok = cells.iter().filter(|c| c.uhgf_ok).count();
    let n = cells.len();
    Ok(ScanReport {
        summary: ScanSummary {
            schema_version: SCHEMA_VERSION,
            omega1_points: w1.len(),
            omega2_points: w2.len(),
            cells: n,
            classic_ok,
            uhgf_ok,
            classic_coverage: 100.0 * classic_ok as f64 / n as f64,
            uhgf_coverage: 100.0 * uhgf_ok as f64 / n as f64,
        },
        cells,
    })
}

pub fn write_scan_csv<W: Write>(cells: &[ScanCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SCAN_CSV_HEADER}")?;
    for c in cells {
        let fail = c.fail_step.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{fail}", c.omega1, c.omega2, c.classic_ok, c.uhgf_ok)?;
    }
    Ok(())
}
