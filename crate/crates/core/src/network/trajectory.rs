use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub const TRAJECTORY_CSV_HEADER: &str = "step,node,mu_hat,pi_hat,mu,pi,b,x_star,classic_pi,flag";

/// Volatility-update diagnostics of one node at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Total weight on the mode expansions (uHGF only).
    pub b: Option<f64>,
    pub x_star: Option<f64>,
    pub classic_pi: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub mu_hat: f64,
    pub pi_hat: f64,
    pub mu: f64,
    pub pi: f64,
    pub diagnostics: Option<StepDiagnostics>,
    /// The predicted-volatility exponent hit the clamp.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// One entry per state node, in network order.
    pub nodes: Vec<NodeRecord>,
}

/// Where a classic run produced a non-positive precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub step: usize,
    pub node: String,
    pub mu_hat: f64,
    pub pi_hat: f64,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub node_names: Vec<String>,
    pub steps: Vec<StepRecord>,
    pub failure: Option<FailureRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }

    /// Posterior means of one node over time.
    pub fn means(&self, node: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.nodes[node].mu).collect()
    }

    pub fn precisions(&self, node: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.nodes[node].pi).collect()
    }

    /// Smallest recorded posterior or predicted precision of a node.
    pub fn min_precision(&self, node: usize) -> f64 {
        self.steps
            .iter()
            .flat_map(|s| [s.nodes[node].pi, s.nodes[node].pi_hat])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for (k, step) in self.steps.iter().enumerate() {
            for (name, r) in self.node_names.iter().zip(&step.nodes) {
                let d = r.diagnostics;
                let mut flags = Vec::new();
                if d.is_some_and(|d| d.fallback) {
                    flags.push("fallback");
                }
                if r.clamped {
                    flags.push("clamped");
                }
                let flag = if flags.is_empty() {
                    "ok".to_owned()
                } else {
                    flags.join(";")
                };
                writeln!(
                    out,
                    "{k},{name},{},{},{},{},{},{},{},{flag}",
                    r.mu_hat,
                    r.pi_hat,
                    r.mu,
                    r.pi,
                    opt(d.and_then(|d| d.b)),
                    opt(d.and_then(|d| d.x_star)),
                    opt(d.map(|d| d.classic_pi)),
                )?;
            }
        }
        if let Some(f) = &self.failure {
            writeln!(
                out,
                "{},{},{},{},,,,,{},negative_precision",
                f.step, f.node, f.mu_hat, f.pi_hat, f.pi
            )?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
