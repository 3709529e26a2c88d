//! The filtering engine: a network of continuous state nodes fed by
//! continuous input nodes, linked by value and volatility edges.
//!
//! Each step predicts every state node from the previous posteriors, then
//! sweeps upward from the inputs: a node is updated once all of its
//! children have been, first folding in its value children (exact, linear)
//! and then its volatility children (classic or positivity-preserving).

mod trajectory;
pub mod value;
pub mod volatility;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::Gaussian;
pub use trajectory::{FailureRecord, NodeRecord, StepDiagnostics, StepRecord, Trajectory, TRAJECTORY_CSV_HEADER};
pub use value::{absorb_value_children, input_update, value_parent_update, ValueChild};
pub use volatility::{
    moment_match_many, volatility_update_classic, volatility_update_classic_multi, volatility_update_multi,
    volatility_update_uhgf, InvalidInput, MultiDiagnostics, VolatilityChild, VolatilityEnergy, VolatilityUpdateInput,
};

/// Exponents of the predicted volatility are clamped to this magnitude.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("edge refers to unknown node `{0}`")]
    UnknownNode(String),
    #[error("self edge on node `{0}`")]
    SelfEdge(String),
    #[error("volatility coupling {strength} on `{parent}` -> `{child}` must be positive")]
    NonPositiveKappa {
        parent: String,
        child: String,
        strength: f64,
    },
    #[error("input node `{0}` cannot be a parent")]
    InputAsParent(String),
    #[error("input node `{0}` cannot have volatility parents")]
    VolatilityOnInput(String),
    #[error("input node `{0}` needs at least one value parent")]
    OrphanInput(String),
    #[error("the network graph has a cycle")]
    Cycle,
    #[error("the network needs at least one input node and one state node")]
    TooSmall,
    #[error("invalid parameter `{field}` = {value} on node `{node}`")]
    InvalidParameter {
        node: String,
        field: &'static str,
        value: f64,
    },
    #[error("time step {step} has non-positive or non-finite elapsed time {t}")]
    NonPositiveTime { step: usize, t: f64 },
    #[error("expected {expected} observations per step, got {got}")]
    InputArity { expected: usize, got: usize },
    #[error("cannot parse network file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Classic,
    Uhgf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Value,
    Volatility,
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

fn one() -> f64 {
    1.0
}

/// Network description as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeSpec {
    Input {
        id: String,
        input_variance: f64,
    },
    State {
        id: String,
        #[serde(default)]
        omega: f64,
        #[serde(default)]
        rho: f64,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        pi: f64,
    },
}

impl NodeSpec {
    pub fn id(&self) -> &str {
        match self {
            NodeSpec::Input { id, .. } | NodeSpec::State { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub parent: String,
    pub child: String,
    pub kind: EdgeKind,
    #[serde(default = "one")]
    pub strength: f64,
}

/// Parameters of the standard two-level continuous filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoLevelConfig {
    pub omega1: f64,
    pub omega2: f64,
    pub kappa: f64,
    pub input_variance: f64,
    pub mu1: f64,
    pub pi1: f64,
    pub mu2: f64,
    pub pi2: f64,
}

impl Default for TwoLevelConfig {
    fn default() -> Self {
        Self {
            omega1: 2.0,
            omega2: -1.0,
            kappa: 1.0,
            input_variance: 1000.0,
            mu1: 0.0,
            pi1: 1.0,
            mu2: 0.0,
            pi2: 1.0,
        }
    }
}

impl NetworkSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, NetworkError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("network spec serialises")
    }

    /// Input `u` observed through `x1`, whose volatility is driven by `x2`.
    pub fn two_level(cfg: &TwoLevelConfig) -> Self {
        NetworkSpec {
            nodes: vec![
                NodeSpec::Input {
                    id: "u".into(),
                    input_variance: cfg.input_variance,
                },
                NodeSpec::State {
                    id: "x1".into(),
                    omega: cfg.omega1,
                    rho: 0.0,
                    lambda: 1.0,
                    mu: cfg.mu1,
                    pi: cfg.pi1,
                },
                NodeSpec::State {
                    id: "x2".into(),
                    omega: cfg.omega2,
                    rho: 0.0,
                    lambda: 1.0,
                    mu: cfg.mu2,
                    pi: cfg.pi2,
                },
            ],
            edges: vec![
                EdgeSpec {
                    parent: "x1".into(),
                    child: "u".into(),
                    kind: EdgeKind::Value,
                    strength: 1.0,
                },
                EdgeSpec {
                    parent: "x2".into(),
                    child: "x1".into(),
                    kind: EdgeKind::Volatility,
                    strength: cfg.kappa,
                },
            ],
        }
    }
}

// ---------------------------------------------------------------------------
// Validated network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    /// Tonic volatility.
    pub omega: f64,
    /// Tonic drift.
    pub rho: f64,
    /// Autoconnection.
    pub lambda_auto: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input { input_variance: f64 },
    State { params: NodeParams, initial: Gaussian },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    pub kind: EdgeKind,
    pub strength: f64,
}

#[derive(Debug, Clone, Default)]
struct Links {
    value_parents: Vec<(NodeId, f64)>,
    volatility_parents: Vec<(NodeId, f64)>,
    value_children: Vec<(NodeId, f64)>,
    volatility_children: Vec<(NodeId, f64)>,
}

/// Beliefs of one node. Input nodes carry their latest observation as `mu`
/// and the inverse input variance as both precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub mu: f64,
    pub pi: f64,
    pub mu_hat: f64,
    pub pi_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub nodes: Vec<NodeState>,
}

/// A classic update hit a non-positive precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFailure {
    pub node: NodeId,
    pub mu_hat: f64,
    pub pi_hat: f64,
    pub pi: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    links: Vec<Links>,
    inputs: Vec<NodeId>,
    states: Vec<NodeId>,
    /// State nodes, each after all of its children.
    update_order: Vec<NodeId>,
}

fn require(node: &str, field: &'static str, value: f64, ok: bool) -> Result<(), NetworkError> {
    if ok {
        Ok(())
    } else {
        Err(NetworkError::InvalidParameter {
            node: node.to_owned(),
            field,
            value,
        })
    }
}

impl Network {
    pub fn from_spec(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        let mut index = HashMap::new();
        let mut nodes = Vec::with_capacity(spec.nodes.len());
        for (i, ns) in spec.nodes.iter().enumerate() {
            if index.insert(ns.id().to_owned(), NodeId(i)).is_some() {
                return Err(NetworkError::DuplicateNode(ns.id().to_owned()));
            }
            let kind = match *ns {
                NodeSpec::Input { ref id, input_variance } => {
                    require(
                        id,
                        "input_variance",
                        input_variance,
                        input_variance.is_finite() && input_variance > 0.0,
                    )?;
                    NodeKind::Input { input_variance }
                }
                NodeSpec::State {
                    ref id,
                    omega,
                    rho,
                    lambda,
                    mu,
                    pi,
                } => {
                    require(id, "omega", omega, omega.is_finite())?;
                    require(id, "rho", rho, rho.is_finite())?;
                    require(id, "lambda", lambda, lambda.is_finite())?;
                    require(id, "mu", mu, mu.is_finite())?;
                    require(id, "pi", pi, pi.is_finite() && pi > 0.0)?;
                    NodeKind::State {
                        params: NodeParams {
                            omega,
                            rho,
                            lambda_auto: lambda,
                        },
                        initial: Gaussian::new(mu, pi),
                    }
                }
            };
            nodes.push(Node {
                name: ns.id().to_owned(),
                kind,
            });
        }

        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| NetworkError::UnknownNode(name.to_owned()))
        };
        let mut edges = Vec::with_capacity(spec.edges.len());
        let mut links = vec![Links::default(); nodes.len()];
        for es in &spec.edges {
            let parent = lookup(&es.parent)?;
            let child = lookup(&es.child)?;
            if parent == child {
                return Err(NetworkError::SelfEdge(es.parent.clone()));
            }
            require(&es.child, "strength", es.strength, es.strength.is_finite())?;
            if matches!(nodes[parent.0].kind, NodeKind::Input { .. }) {
                return Err(NetworkError::InputAsParent(es.parent.clone()));
            }
            match es.kind {
                EdgeKind::Value => {
                    links[parent.0].value_children.push((child, es.strength));
                    links[child.0].value_parents.push((parent, es.strength));
                }
                EdgeKind::Volatility => {
                    if es.strength <= 0.0 {
                        return Err(NetworkError::NonPositiveKappa {
                            parent: es.parent.clone(),
                            child: es.child.clone(),
                            strength: es.strength,
                        });
                    }
                    if matches!(nodes[child.0].kind, NodeKind::Input { .. }) {
                        return Err(NetworkError::VolatilityOnInput(es.child.clone()));
                    }
                    links[parent.0].volatility_children.push((child, es.strength));
                    links[child.0].volatility_parents.push((parent, es.strength));
                }
            }
            edges.push(Edge {
                parent,
                child,
                kind: es.kind,
                strength: es.strength,
            });
        }

        let (inputs, states): (Vec<NodeId>, Vec<NodeId>) = (0..nodes.len())
            .map(NodeId)
            .partition(|id| matches!(nodes[id.0].kind, NodeKind::Input { .. }));
        if inputs.is_empty() || states.is_empty() {
            return Err(NetworkError::TooSmall);
        }
        for id in &inputs {
            if links[id.0].value_parents.is_empty() {
                return Err(NetworkError::OrphanInput(nodes[id.0].name.clone()));
            }
        }

        // Kahn's algorithm, children before parents
        let mut pending: Vec<usize> = links
            .iter()
            .map(|l| l.value_children.len() + l.volatility_children.len())
            .collect();
        let mut ready: VecDeque<usize> = (0..nodes.len()).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(i) = ready.pop_front() {
            order.push(NodeId(i));
            for &(p, _) in links[i].value_parents.iter().chain(&links[i].volatility_parents) {
                pending[p.0] -= 1;
                if pending[p.0] == 0 {
                    ready.push_back(p.0);
                }
            }
        }
        if order.len() != nodes.len() {
            return Err(NetworkError::Cycle);
        }
        let update_order = order
            .into_iter()
            .filter(|id| matches!(nodes[id.0].kind, NodeKind::State { .. }))
            .collect();

        Ok(Self {
            nodes,
            edges,
            links,
            inputs,
            states,
            update_order,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, NetworkError> {
        Self::from_spec(&NetworkSpec::from_toml_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn input_nodes(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn state_nodes(&self) -> &[NodeId] {
        &self.states
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn params(&self, node: NodeId) -> Option<&NodeParams> {
        match &self.nodes[node.0].kind {
            NodeKind::State { params, .. } => Some(params),
            NodeKind::Input { .. } => None,
        }
    }

    pub fn initial_state(&self) -> BeliefState {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Input { input_variance } => NodeState {
                    mu: 0.0,
                    pi: 1.0 / input_variance,
                    mu_hat: 0.0,
                    pi_hat: 1.0 / input_variance,
                },
                NodeKind::State { initial, .. } => NodeState {
                    mu: initial.mu,
                    pi: initial.pi,
                    mu_hat: initial.mu,
                    pi_hat: initial.pi,
                },
            })
            .collect();
        BeliefState { nodes }
    }

    fn state_params(&self, node: NodeId) -> &NodeParams {
        self.params(node).expect("state node")
    }

    /// `t (ρ + Σ αᵢ μᵢ)` over the value parents' current means.
    pub fn predicted_drift(&self, node: NodeId, state: &BeliefState, t: f64) -> f64 {
        let params = self.state_params(node);
        let coupled: f64 = self.links[node.0]
            .value_parents
            .iter()
            .map(|&(p, a)| a * state.nodes[p.0].mu)
            .sum();
        t * (params.rho + coupled)
    }

    /// `t exp(ω + Σ κⱼ μⱼ)` over the volatility parents' current means, with
    /// the exponent clamped to `±EXP_CLAMP`. The flag reports clamping.
    pub fn predicted_volatility(&self, node: NodeId, state: &BeliefState, t: f64) -> (f64, bool) {
        let exponent = self.state_params(node).omega + self.volatility_sum(node, state, None);
        let clamped = exponent.abs() > EXP_CLAMP;
        (t * exponent.clamp(-EXP_CLAMP, EXP_CLAMP).exp(), clamped)
    }

    fn volatility_sum(&self, node: NodeId, state: &BeliefState, skip: Option<NodeId>) -> f64 {
        self.links[node.0]
            .volatility_parents
            .iter()
            .filter(|(p, _)| Some(*p) != skip)
            .map(|&(p, k)| k * state.nodes[p.0].mu)
            .sum()
    }

    /// Prediction `(μ̂, π̂)` of a state node from the beliefs in `state`.
    pub fn predict_node(&self, node: NodeId, state: &BeliefState, t: f64) -> (Gaussian, bool) {
        let params = self.state_params(node);
        let current = state.nodes[node.0];
        let (omega, clamped) = self.predicted_volatility(node, state, t);
        let mu_hat = params.lambda_auto * current.mu + self.predicted_drift(node, state, t);
        let pi_hat = 1.0 / (1.0 / current.pi + omega);
        (Gaussian::new(mu_hat, pi_hat), clamped)
    }

    /// Advances `state` by one observation per input node. On a classic
    /// failure `state` is left partially updated and should be discarded.
    pub fn step(
        &self,
        state: &mut BeliefState,
        observations: &[f64],
        t: f64,
        mode: UpdateMode,
    ) -> Result<StepRecord, StepFailure> {
        assert_eq!(observations.len(), self.inputs.len(), "one observation per input node");
        let prev = state.clone();
        let mut clamped = vec![false; self.nodes.len()];
        for &id in &self.states {
            let (pred, c) = self.predict_node(id, &prev, t);
            clamped[id.0] = c;
            let s = &mut state.nodes[id.0];
            s.mu_hat = pred.mu;
            s.pi_hat = pred.pi;
        }
        for (&id, &u) in self.inputs.iter().zip(observations) {
            let mu_hat = self.links[id.0]
                .value_parents
                .iter()
                .map(|&(p, a)| a * state.nodes[p.0].mu_hat)
                .sum();
            let s = &mut state.nodes[id.0];
            s.mu_hat = mu_hat;
            s.mu = u;
        }

        let mut diagnostics: Vec<Option<StepDiagnostics>> = vec![None; self.nodes.len()];
        for &id in &self.update_order {
            let (posterior, diag) = self.update_node(id, state, &prev, t, mode)?;
            diagnostics[id.0] = diag;
            let s = &mut state.nodes[id.0];
            s.mu = posterior.mu;
            s.pi = posterior.pi;
        }

        Ok(StepRecord {
            nodes: self
                .states
                .iter()
                .map(|&id| {
                    let s = state.nodes[id.0];
                    NodeRecord {
                        mu_hat: s.mu_hat,
                        pi_hat: s.pi_hat,
                        mu: s.mu,
                        pi: s.pi,
                        diagnostics: diagnostics[id.0],
                        clamped: clamped[id.0],
                    }
                })
                .collect(),
        })
    }

    fn update_node(
        &self,
        id: NodeId,
        state: &BeliefState,
        prev: &BeliefState,
        t: f64,
        mode: UpdateMode,
    ) -> Result<(Gaussian, Option<StepDiagnostics>), StepFailure> {
        let me = state.nodes[id.0];
        let links = &self.links[id.0];
        let prediction = Gaussian::new(me.mu_hat, me.pi_hat);

        let value_terms = links.value_children.iter().filter_map(|&(c, alpha)| {
            let child = state.nodes[c.0];
            let pe = child.mu - child.mu_hat;
            let slope = match self.nodes[c.0].kind {
                NodeKind::Input { .. } => alpha,
                NodeKind::State { .. } => alpha * t,
            };
            (slope != 0.0).then(|| (child.pi_hat * slope * slope, me.mu_hat + pe / slope))
        });
        let prior = value::absorb_quadratic_terms(prediction, value_terms);

        if links.volatility_children.is_empty() {
            return Ok((prior, None));
        }
        let children: Vec<VolatilityChild> = links
            .volatility_children
            .iter()
            .map(|&(c, kappa)| {
                let child = state.nodes[c.0];
                let pe = child.mu - child.mu_hat;
                VolatilityChild {
                    t,
                    sigma_prev: 1.0 / prev.nodes[c.0].pi,
                    kappa,
                    omega_eff: self.state_params(c).omega + self.volatility_sum(c, prev, Some(id)),
                    beta: 1.0 / child.pi + pe * pe,
                }
            })
            .collect();

        match mode {
            UpdateMode::Classic => match volatility_update_classic_multi(prior, &children) {
                Ok(g) => Ok((
                    g,
                    Some(StepDiagnostics {
                        b: None,
                        x_star: None,
                        classic_pi: g.pi,
                        fallback: false,
                    }),
                )),
                Err(e) => Err(StepFailure {
                    node: id,
                    mu_hat: me.mu_hat,
                    pi_hat: me.pi_hat,
                    pi: e.pi,
                }),
            },
            UpdateMode::Uhgf if children.len() == 1 => {
                let c = children[0];
                let input = VolatilityUpdateInput {
                    t: c.t,
                    sigma_child_prev: c.sigma_prev,
                    kappa: c.kappa,
                    omega_eff: c.omega_eff,
                    beta: c.beta,
                    mu_hat: prior.mu,
                    pi_hat: prior.pi,
                };
                let (g, d) = volatility_update_uhgf(&input);
                Ok((
                    g,
                    Some(StepDiagnostics {
                        b: Some(d.b),
                        x_star: Some(d.x_star),
                        classic_pi: d.classic_pi,
                        fallback: d.expansions[1].used_fallback,
                    }),
                ))
            }
            UpdateMode::Uhgf => {
                let (g, d) = volatility_update_multi(prior, &children);
                Ok((
                    g,
                    Some(StepDiagnostics {
                        b: Some(d.mode_weight()),
                        x_star: Some(d.dominant_x_star()),
                        classic_pi: d.classic_pi,
                        fallback: d.any_fallback(),
                    }),
                ))
            }
        }
    }

    /// Filters a sequence of `(observation, elapsed time)` pairs through a
    /// network with a single input node. Classic runs stop at the first
    /// non-positive precision and record where it happened.
    pub fn filter_sequence(&self, inputs: &[(f64, f64)], mode: UpdateMode) -> Result<Trajectory, NetworkError> {
        if self.inputs.len() != 1 {
            return Err(NetworkError::InputArity {
                expected: self.inputs.len(),
                got: 1,
            });
        }
        if let Some((step, &(_, t))) = inputs
            .iter()
            .enumerate()
            .find(|(_, (_, t))| !(t.is_finite() && *t > 0.0))
        {
            return Err(NetworkError::NonPositiveTime { step, t });
        }
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(inputs.len());
        let mut failure = None;
        for (k, &(u, t)) in inputs.iter().enumerate() {
            match self.step(&mut state, &[u], t, mode) {
                Ok(record) => steps.push(record),
                Err(f) => {
                    failure = Some(FailureRecord {
                        step: k,
                        node: self.nodes[f.node.0].name.clone(),
                        mu_hat: f.mu_hat,
                        pi_hat: f.pi_hat,
                        pi: f.pi,
                    });
                    break;
                }
            }
        }
        Ok(Trajectory {
            node_names: self.states.iter().map(|id| self.nodes[id.0].name.clone()).collect(),
            steps,
            failure,
        })
    }
}
