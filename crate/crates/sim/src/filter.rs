//! Filtering a series through a network and summarising the run.

use serde::{Deserialize, Serialize};
use uhgf_core::network::{EdgeKind, FailureRecord, Network, Trajectory, TwoLevelConfig, UpdateMode};

use crate::report::SCHEMA_VERSION;
use crate::series::Series;
use crate::HarnessError;

/// Standard two-level conditions: ω₁ = 2, ω₂ = −1, α_u = 1000.
pub fn standard_preset() -> TwoLevelConfig {
    TwoLevelConfig::default()
}

/// High meta-volatility variant of the standard preset (ω₂ = 2).
pub fn robustness_preset() -> TwoLevelConfig {
    TwoLevelConfig {
        omega2: 2.0,
        ..TwoLevelConfig::default()
    }
}

pub fn mode_name(mode: UpdateMode) -> &'static str {
    match mode {
        UpdateMode::Classic => "classic",
        UpdateMode::Uhgf => "uhgf",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMinimum {
    pub node: String,
    pub min_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub schema_version: u32,
    pub mode: UpdateMode,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub completed: bool,
    pub failure: Option<FailureRecord>,
    /// Smallest posterior or predicted precision per state node.
    pub min_precision: Vec<NodeMinimum>,
    pub level1_node: String,
    /// Root-mean-square error of the level-1 posterior mean against the
    /// series' ground truth, over completed steps.
    pub rmse_level1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub trajectory: Trajectory,
    pub summary: FilterSummary,
}

/// Name of the first value parent of the network's input node.
pub fn level1_node(network: &Network) -> Option<String> {
    let input = *network.input_nodes().first()?;
    network
        .edges()
        .iter()
        .find(|e| e.child == input && e.kind == EdgeKind::Value)
        .map(|e| network.nodes()[e.parent.0].name.clone())
}

pub fn run_filter(series: &Series, network: &Network, mode: UpdateMode) -> Result<FilterRun, HarnessError> {
    let trajectory = network.filter_sequence(&series.inputs(), mode)?;
    let level1 = level1_node(network).expect("validated networks have an input with a value parent");
    let idx = trajectory.node_index(&level1).expect("level-1 node is a state node");
    let rmse_level1 = series.truth.as_ref().and_then(|truth| {
        let means = trajectory.means(idx);
        (!means.is_empty()).then(|| {
            let sse: f64 = means.iter().zip(truth).map(|(m, t)| (m - t) * (m - t)).sum();
            (sse / means.len() as f64).sqrt()
        })
    });
    let summary = FilterSummary {
        schema_version: SCHEMA_VERSION,
        mode,
        steps_requested: series.len(),
        steps_completed: trajectory.len(),
        completed: trajectory.completed(),
        failure: trajectory.failure.clone(),
        min_precision: trajectory
            .node_names
            .iter()
            .enumerate()
            .map(|(i, node)| NodeMinimum {
                node: node.clone(),
                min_precision: trajectory.min_precision(i),
            })
            .collect(),
        level1_node: level1,
        rmse_level1,
    };
    Ok(FilterRun { trajectory, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDifference {
    pub node: String,
    pub max_abs_mu_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub classic: FilterSummary,
    pub uhgf: FilterSummary,
    /// Steps completed by both modes.
    pub common_steps: usize,
    pub differences: Vec<NodeDifference>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub classic: FilterRun,
    pub uhgf: FilterRun,
    pub summary: CompareSummary,
}

/// Filters in both modes and diffs the posterior means over the steps both
/// completed.
pub fn compare(series: &Series, network: &Network) -> Result<Comparison, HarnessError> {
    let classic = run_filter(series, network, UpdateMode::Classic)?;
    let uhgf = run_filter(series, network, UpdateMode::Uhgf)?;
    let common_steps = classic.trajectory.len().min(uhgf.trajectory.len());
    let differences = classic
        .trajectory
        .node_names
        .iter()
        .enumerate()
        .map(|(i, node)| NodeDifference {
            node: node.clone(),
            max_abs_mu_diff: classic.trajectory.steps[..common_steps]
                .iter()
                .zip(&uhgf.trajectory.steps)
                .map(|(a, b)| (a.nodes[i].mu - b.nodes[i].mu).abs())
                .fold(0.0, f64::max),
        })
        .collect();
    let summary = CompareSummary {
        schema_version: SCHEMA_VERSION,
        classic: classic.summary.clone(),
        uhgf: uhgf.summary.clone(),
        common_steps,
        differences,
    };
    Ok(Comparison { classic, uhgf, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use uhgf_core::network::NetworkSpec;

    fn network(cfg: &TwoLevelConfig) -> Network {
        Network::from_spec(&NetworkSpec::two_level(cfg)).unwrap()
    }

    #[test]
    fn rmse_against_truth() {
        let series = Series {
            observations: vec![0.0; 10],
            truth: Some(vec![1.0; 10]),
        };
        let run = run_filter(&series, &network(&standard_preset()), UpdateMode::Uhgf).unwrap();
        assert_eq!(run.summary.level1_node, "x1");
        assert!(run.summary.completed);
        assert!((run.summary.rmse_level1.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(run.summary.min_precision.len(), 2);
    }

    #[test]
    fn no_truth_no_rmse() {
        let series = Series {
            observations: vec![1.0, 2.0],
            truth: None,
        };
        let run = run_filter(&series, &network(&standard_preset()), UpdateMode::Classic).unwrap();
        assert!(run.summary.rmse_level1.is_none());
    }

    #[test]
    fn identical_modes_on_quiet_series() {
        let series = Series {
            observations: vec![0.0; 20],
            truth: None,
        };
        let cmp = compare(&series, &network(&standard_preset())).unwrap();
        assert_eq!(cmp.summary.common_steps, 20);
        let x1 = &cmp.summary.differences[0];
        assert_eq!(x1.max_abs_mu_diff, 0.0);
    }
}
