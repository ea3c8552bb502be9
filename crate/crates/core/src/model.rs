//! Network, application, and assignment data model.
//!
//! Every type here is plain data. Values built through [`NetworkGraph::new`]
//! and [`validate_scenario`] are guaranteed to satisfy the invariants listed
//! on each type, and are immutable afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{AssignmentSource, CapacityMode, SimConfig, TrafficMode};
use crate::scheduling::Policy;

/// Lowest admissible Werner-state fidelity (the fully mixed state).
pub const WERNER_FLOOR: f64 = 0.25;

/// Largest Poisson arrival rate accepted by exact inverse-transform sampling.
pub const MAX_ARRIVAL_RATE: f64 = 30.0;

const INTEGRALITY_TOL: f64 = 1e-9;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(u32::try_from(i).expect("identifier out of range"))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Node identifier, dense from 0.
    NodeId
);
dense_id!(
    /// Quantum link identifier, dense from 0.
    EdgeId
);
dense_id!(
    /// Application identifier, dense from 0.
    AppId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Repeater,
    Computation,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Repeater => write!(f, "Repeater"),
            NodeKind::Computation => write!(f, "Computation"),
        }
    }
}

fn default_prob() -> f64 {
    1.0
}

fn default_fidelity() -> f64 {
    WERNER_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Probability that an entanglement swap performed at this node succeeds.
    #[serde(default = "default_prob")]
    pub swap_success_prob: f64,
}

impl Node {
    pub fn new(id: usize, kind: NodeKind, swap_success_prob: f64) -> Self {
        Self {
            id: id.into(),
            kind,
            swap_success_prob,
        }
    }
}

/// An undirected link producing elementary EPR pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumLink {
    pub id: EdgeId,
    pub endpoints: [NodeId; 2],
    /// EPR pairs attempted per slot.
    pub capacity_max: u32,
    #[serde(default = "default_prob")]
    pub gen_success_prob: f64,
    /// Werner fidelity of the generated pairs.
    #[serde(default = "default_prob")]
    pub fidelity: f64,
}

impl QuantumLink {
    pub fn new(id: usize, a: usize, b: usize, capacity_max: u32, gen_success_prob: f64, fidelity: f64) -> Self {
        Self {
            id: id.into(),
            endpoints: [a.into(), b.into()],
            capacity_max,
            gen_success_prob,
            fidelity,
        }
    }

    /// Expected number of pairs generated per slot.
    pub fn effective_capacity(&self) -> f64 {
        f64::from(self.capacity_max) * self.gen_success_prob
    }

    /// The endpoint opposite to `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.endpoints[0] == node {
            self.endpoints[1]
        } else {
            self.endpoints[0]
        }
    }
}

/// A distributed quantum computing tenant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Application {
    pub id: AppId,
    pub host: NodeId,
    pub weight: f64,
    pub workers_needed: u32,
    pub candidates: Vec<NodeId>,
    #[serde(default = "default_fidelity")]
    pub min_fidelity: f64,
    /// Requests per slot, only used with Poisson traffic.
    #[serde(default)]
    pub arrival_rate: f64,
}

impl Application {
    pub fn new(id: usize, host: usize, weight: f64, workers_needed: u32, candidates: &[usize]) -> Self {
        Self {
            id: id.into(),
            host: host.into(),
            weight,
            workers_needed,
            candidates: candidates.iter().map(|&c| c.into()).collect(),
            min_fidelity: WERNER_FLOOR,
            arrival_rate: 0.0,
        }
    }

    pub fn with_min_fidelity(mut self, f: f64) -> Self {
        self.min_fidelity = f;
        self
    }

    pub fn with_arrival_rate(mut self, rate: f64) -> Self {
        self.arrival_rate = rate;
        self
    }
}

/// Worker pool chosen for every application, indexed by [`AppId`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pools: Vec<BTreeSet<NodeId>>,
}

impl Assignment {
    pub fn new(pools: Vec<BTreeSet<NodeId>>) -> Self {
        Self { pools }
    }

    pub fn workers(&self, app: AppId) -> &BTreeSet<NodeId> {
        &self.pools[app.index()]
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AppId, &BTreeSet<NodeId>)> {
        self.pools.iter().enumerate().map(|(i, p)| (AppId::from(i), p))
    }

    /// Checks sizes and membership against the per-app eligible sets.
    pub fn check(&self, apps: &[Application], eligible: &[BTreeSet<NodeId>]) -> Result<(), Vec<Diagnostic>> {
        let mut diags = Vec::new();
        if self.pools.len() != apps.len() {
            diags.push(Diagnostic::new(
                "assignment",
                format!("expected {} pools, found {}", apps.len(), self.pools.len()),
            ));
            return Err(diags);
        }
        for (app, pool) in apps.iter().zip(&self.pools) {
            let loc = format!("assignment[{}]", app.id);
            if pool.len() != app.workers_needed as usize {
                diags.push(Diagnostic::new(
                    &loc,
                    format!("expected {} workers, found {}", app.workers_needed, pool.len()),
                ));
            }
            for w in pool.difference(&eligible[app.id.index()]) {
                diags.push(Diagnostic::new(&loc, format!("node {w} is not an eligible worker")));
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }
}

/// One validation failure, with a path-like locator into the scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub locator: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(locator: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            locator: locator.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locator, self.message)
    }
}

fn is_prob(p: f64) -> bool {
    p > 0.0 && p <= 1.0
}

fn is_fidelity(f: f64) -> bool {
    (WERNER_FLOOR..=1.0).contains(&f)
}

fn fidelity_diag(loc: String, f: f64) -> Diagnostic {
    if f < WERNER_FLOOR {
        Diagnostic::new(loc, format!("fidelity below Werner floor 0.25 (got {f})"))
    } else {
        Diagnostic::new(loc, format!("fidelity must lie in [0.25, 1] (got {f})"))
    }
}

/// Undirected multigraph-free network of repeaters and computation nodes.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<QuantumLink>,
    /// Per node, `(neighbor, link)` sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
}

impl NetworkGraph {
    pub fn new(nodes: Vec<Node>, links: Vec<QuantumLink>) -> Result<Self, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.id.index() != i {
                diags.push(Diagnostic::new(
                    format!("nodes[{i}].id"),
                    format!("ids must be dense from 0 in order; expected {i}, found {}", n.id),
                ));
            }
            if !is_prob(n.swap_success_prob) {
                diags.push(Diagnostic::new(
                    format!("nodes[{i}].swap_success_prob"),
                    format!("must lie in (0, 1] (got {})", n.swap_success_prob),
                ));
            }
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen_pairs = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            let loc = |field: &str| format!("links[{i}].{field}");
            if l.id.index() != i {
                diags.push(Diagnostic::new(
                    loc("id"),
                    format!("ids must be dense from 0 in order; expected {i}, found {}", l.id),
                ));
            }
            let [a, b] = l.endpoints;
            let mut endpoints_ok = true;
            for e in [a, b] {
                if e.index() >= nodes.len() {
                    diags.push(Diagnostic::new(loc("endpoints"), format!("node {e} does not exist")));
                    endpoints_ok = false;
                }
            }
            if a == b {
                diags.push(Diagnostic::new(loc("endpoints"), "endpoints must be distinct"));
                endpoints_ok = false;
            }
            if endpoints_ok {
                let key = (a.min(b), a.max(b));
                if let Some(prev) = seen_pairs.insert(key, i) {
                    diags.push(Diagnostic::new(
                        loc("endpoints"),
                        format!(
                            "duplicate link between nodes {} and {} (see links[{prev}])",
                            key.0, key.1
                        ),
                    ));
                } else {
                    adjacency[a.index()].push((b, EdgeId::from(i)));
                    adjacency[b.index()].push((a, EdgeId::from(i)));
                }
            }
            if l.capacity_max < 1 {
                diags.push(Diagnostic::new(loc("capacity_max"), "must be at least 1"));
            }
            if !is_prob(l.gen_success_prob) {
                diags.push(Diagnostic::new(
                    loc("gen_success_prob"),
                    format!("must lie in (0, 1] (got {})", l.gen_success_prob),
                ));
            }
            if !is_fidelity(l.fidelity) {
                diags.push(fidelity_diag(loc("fidelity"), l.fidelity));
            }
        }

        if !diags.is_empty() {
            return Err(diags);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            nodes,
            links,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[QuantumLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn link(&self, id: EdgeId) -> &QuantumLink {
        &self.links[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.nodes.len()
    }

    /// Neighbors of `id` with the connecting link, ascending by neighbor id.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[id.index()]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        let adj = &self.adjacency[a.index()];
        adj.binary_search_by_key(&b, |&(n, _)| n).ok().map(|i| adj[i].1)
    }

    pub fn effective_capacities(&self) -> Vec<f64> {
        self.links.iter().map(QuantumLink::effective_capacity).collect()
    }
}

/// The raw scenario as read from a file, before validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub nodes: Vec<Node>,
    pub links: Vec<QuantumLink>,
    pub apps: Vec<Application>,
    pub sim: SimConfig,
}

/// A scenario whose every invariant has been checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    graph: NetworkGraph,
    apps: Vec<Application>,
    sim: SimConfig,
}

impl Scenario {
    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn apps(&self) -> &[Application] {
        &self.apps
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }

    /// Returns a copy with a different simulation configuration, re-validated.
    pub fn with_sim(&self, sim: SimConfig) -> Result<Self, Vec<Diagnostic>> {
        validate_scenario(&ScenarioSpec {
            nodes: self.graph.nodes.clone(),
            links: self.graph.links.clone(),
            apps: self.apps.clone(),
            sim,
        })
    }
}

/// Checks every model invariant and cross-reference, returning all violations.
///
/// Worker eligibility depends on routing and is checked separately by
/// [`crate::routing::eligible_sets`].
pub fn validate_scenario(spec: &ScenarioSpec) -> Result<Scenario, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let graph = match NetworkGraph::new(spec.nodes.clone(), spec.links.clone()) {
        Ok(g) => Some(g),
        Err(d) => {
            diags.extend(d);
            None
        }
    };
    let kind_of = |id: NodeId| spec.nodes.get(id.index()).map(|n| n.kind);

    for (i, app) in spec.apps.iter().enumerate() {
        let loc = |field: &str| format!("apps[{i}].{field}");
        if app.id.index() != i {
            diags.push(Diagnostic::new(
                loc("id"),
                format!("ids must be dense from 0 in order; expected {i}, found {}", app.id),
            ));
        }
        match kind_of(app.host) {
            None => diags.push(Diagnostic::new(
                loc("host"),
                format!("node {} does not exist", app.host),
            )),
            Some(NodeKind::Repeater) => {
                diags.push(Diagnostic::new(loc("host"), format!("node {} is a Repeater", app.host)))
            }
            Some(NodeKind::Computation) => {}
        }
        if !(app.weight > 0.0 && app.weight.is_finite()) {
            diags.push(Diagnostic::new(
                loc("weight"),
                format!("must be positive (got {})", app.weight),
            ));
        } else if spec.sim.policy == Policy::Wrr && app.weight.fract() != 0.0 {
            diags.push(Diagnostic::new(
                loc("weight"),
                format!("WRR requires integer weights (got {})", app.weight),
            ));
        }
        if app.workers_needed < 1 {
            diags.push(Diagnostic::new(loc("workers_needed"), "must be at least 1"));
        }
        let mut uniq = BTreeSet::new();
        for c in &app.candidates {
            if !uniq.insert(*c) {
                diags.push(Diagnostic::new(loc("candidates"), format!("node {c} listed twice")));
            }
            if *c == app.host {
                diags.push(Diagnostic::new(loc("candidates"), format!("node {c} is the host")));
            }
            match kind_of(*c) {
                None => diags.push(Diagnostic::new(loc("candidates"), format!("node {c} does not exist"))),
                Some(NodeKind::Repeater) => {
                    diags.push(Diagnostic::new(loc("candidates"), format!("node {c} is a Repeater")))
                }
                Some(NodeKind::Computation) => {}
            }
        }
        if app.workers_needed as usize > app.candidates.len() {
            diags.push(Diagnostic::new(
                loc("workers_needed"),
                format!(
                    "workers_needed exceeds candidates ({} > {})",
                    app.workers_needed,
                    app.candidates.len()
                ),
            ));
        }
        if !is_fidelity(app.min_fidelity) {
            diags.push(fidelity_diag(loc("min_fidelity"), app.min_fidelity));
        }
        if !(app.arrival_rate >= 0.0 && app.arrival_rate <= MAX_ARRIVAL_RATE) {
            diags.push(Diagnostic::new(
                loc("arrival_rate"),
                format!("must lie in [0, {MAX_ARRIVAL_RATE}] (got {})", app.arrival_rate),
            ));
        }
    }

    let sim = &spec.sim;
    if sim.slots < 1 {
        diags.push(Diagnostic::new("sim.slots", "must be at least 1"));
    }
    if sim.warmup >= sim.slots {
        diags.push(Diagnostic::new(
            "sim.warmup",
            format!("must be smaller than slots ({} >= {})", sim.warmup, sim.slots),
        ));
    }
    if sim.quantum_base < 1 {
        diags.push(Diagnostic::new("sim.quantum_base", "must be at least 1"));
    }
    if sim.replications < 1 {
        diags.push(Diagnostic::new("sim.replications", "must be at least 1"));
    }
    if sim.exhaustive_limit < 1 {
        diags.push(Diagnostic::new("sim.exhaustive_limit", "must be at least 1"));
    }
    if sim.policy == Policy::Fcfs && sim.traffic == TrafficMode::Backlogged {
        diags.push(Diagnostic::new(
            "sim.policy",
            "FCFS requires poisson traffic; ordering among backlogged queues is undefined",
        ));
    }
    if sim.capacity_mode == CapacityMode::Deterministic {
        for (i, l) in spec.links.iter().enumerate() {
            let eff = l.effective_capacity();
            if (eff - eff.round()).abs() > INTEGRALITY_TOL {
                diags.push(Diagnostic::new(
                    format!("links[{i}].gen_success_prob"),
                    format!("deterministic capacity mode needs integral capacity_max * gen_success_prob (got {eff})"),
                ));
            }
        }
    }
    if let AssignmentSource::Given(pools) = &sim.assignment {
        if pools.len() != spec.apps.len() {
            diags.push(Diagnostic::new(
                "sim.assignment.given",
                format!("expected {} pools, found {}", spec.apps.len(), pools.len()),
            ));
        } else {
            for (i, (pool, app)) in pools.iter().zip(&spec.apps).enumerate() {
                let loc = format!("sim.assignment.given[{i}]");
                let set: BTreeSet<_> = pool.iter().copied().collect();
                if set.len() != pool.len() {
                    diags.push(Diagnostic::new(&loc, "worker listed twice"));
                }
                if set.len() != app.workers_needed as usize {
                    diags.push(Diagnostic::new(
                        &loc,
                        format!("expected {} workers, found {}", app.workers_needed, set.len()),
                    ));
                }
                for w in &set {
                    if !app.candidates.contains(w) {
                        diags.push(Diagnostic::new(&loc, format!("node {w} is not a candidate")));
                    }
                }
            }
        }
    }

    match (graph, diags.is_empty()) {
        (Some(graph), true) => Ok(Scenario {
            graph,
            apps: spec.apps.clone(),
            sim: spec.sim.clone(),
        }),
        _ => Err(diags),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioSpec {
        ScenarioSpec {
            nodes: vec![
                Node::new(0, NodeKind::Computation, 1.0),
                Node::new(1, NodeKind::Computation, 1.0),
            ],
            links: vec![QuantumLink::new(0, 0, 1, 1, 1.0, 1.0)],
            apps: vec![Application::new(0, 0, 1.0, 1, &[1])],
            sim: SimConfig::new(10),
        }
    }

    fn messages(spec: &ScenarioSpec) -> Vec<String> {
        validate_scenario(spec)
            .expect_err("expected diagnostics")
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    #[test]
    fn minimal_scenario_is_valid() {
        let s = validate_scenario(&minimal()).unwrap();
        assert_eq!(s.graph().node_count(), 2);
        assert_eq!(s.graph().link_between(NodeId(1), NodeId(0)), Some(EdgeId(0)));
    }

    #[test]
    fn workers_needed_exceeding_candidates() {
        let mut spec = minimal();
        spec.nodes.push(Node::new(2, NodeKind::Computation, 1.0));
        spec.apps[0].candidates = vec![NodeId(1), NodeId(2)];
        spec.apps[0].workers_needed = 3;
        let msgs = messages(&spec);
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].starts_with("apps[0].workers_needed: workers_needed exceeds candidates"));
    }

    #[test]
    fn fidelity_below_werner_floor() {
        let mut spec = minimal();
        spec.links[0].fidelity = 0.1;
        let msgs = messages(&spec);
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].contains("links[0].fidelity: fidelity below Werner floor 0.25"));
    }

    #[test]
    fn repeater_candidate_is_located() {
        let mut spec = minimal();
        spec.nodes.push(Node::new(2, NodeKind::Repeater, 0.9));
        spec.apps[0].candidates.push(NodeId(2));
        let msgs = messages(&spec);
        assert_eq!(msgs, vec!["apps[0].candidates: node 2 is a Repeater".to_string()]);
    }

    #[test]
    fn fcfs_with_backlogged_traffic_rejected() {
        let mut spec = minimal();
        spec.sim.policy = Policy::Fcfs;
        assert!(messages(&spec)[0].starts_with("sim.policy: FCFS requires poisson"));
        spec.sim.traffic = TrafficMode::Poisson;
        assert!(validate_scenario(&spec).is_ok());
    }

    #[test]
    fn wrr_needs_integer_weights() {
        let mut spec = minimal();
        spec.apps[0].weight = 1.5;
        assert!(validate_scenario(&spec).is_ok());
        spec.sim.policy = Policy::Wrr;
        assert!(messages(&spec)[0].contains("WRR requires integer weights"));
    }

    #[test]
    fn deterministic_capacity_must_be_integral() {
        let mut spec = minimal();
        spec.links[0].capacity_max = 4;
        spec.links[0].gen_success_prob = 0.3;
        assert!(messages(&spec)[0].contains("integral"));
        spec.sim.capacity_mode = CapacityMode::Stochastic;
        assert!(validate_scenario(&spec).is_ok());
        spec.sim.capacity_mode = CapacityMode::Deterministic;
        spec.links[0].gen_success_prob = 0.5;
        assert!(validate_scenario(&spec).is_ok());
    }

    #[test]
    fn reports_every_violation() {
        let mut spec = minimal();
        spec.nodes[1].swap_success_prob = 0.0;
        spec.links[0].endpoints = [NodeId(0), NodeId(0)];
        spec.apps[0].weight = -1.0;
        spec.apps[0].arrival_rate = 31.0;
        spec.sim.warmup = 10;
        let msgs = messages(&spec);
        assert_eq!(msgs.len(), 5, "{msgs:?}");
    }

    #[test]
    fn validation_is_pure() {
        let mut spec = minimal();
        spec.links[0].fidelity = 0.2;
        spec.apps[0].host = NodeId(9);
        let before = format!("{spec:?}");
        let a = messages(&spec);
        let b = messages(&spec);
        assert_eq!(a, b);
        assert_eq!(before, format!("{spec:?}"));
    }

    #[test]
    fn given_assignment_checked_against_candidates() {
        let mut spec = minimal();
        spec.sim.assignment = AssignmentSource::Given(vec![vec![NodeId(0)]]);
        let msgs = messages(&spec);
        assert_eq!(
            msgs,
            vec!["sim.assignment.given[0]: node 0 is not a candidate".to_string()]
        );
    }

    #[test]
    fn duplicate_links_rejected() {
        let mut spec = minimal();
        spec.links.push(QuantumLink::new(1, 1, 0, 1, 1.0, 1.0));
        assert!(messages(&spec)[0].contains("duplicate link"));
    }
}
