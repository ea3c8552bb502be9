//! Host-to-worker routing and the entanglement metrics of a path.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::model::{AppId, Application, Assignment, Diagnostic, EdgeId, NetworkGraph, NodeId, Scenario};
use crate::scheduling::CostMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("no path from node {src} to node {dst}")]
    NoPath { src: NodeId, dst: NodeId },
    #[error("app {app}: only {eligible} eligible workers, {needed} needed")]
    EmptyEligibleSet { app: AppId, eligible: usize, needed: u32 },
}

/// A simple path, stored both as nodes and as the links between them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
}

impl Path {
    /// Builds a path from a node sequence, checking adjacency and simplicity.
    pub fn from_nodes(graph: &NetworkGraph, nodes: Vec<NodeId>) -> Option<Self> {
        if nodes.len() < 2 || nodes.iter().collect::<BTreeSet<_>>().len() != nodes.len() {
            return None;
        }
        let edges = nodes
            .windows(2)
            .map(|w| graph.link_between(w[0], w[1]))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn hop_count(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("path has at least two nodes")
    }

    /// Nodes that perform a swap, i.e. all but the two endpoints.
    pub fn intermediates(&self) -> &[NodeId] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// A host-to-worker flow with its cached entanglement metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub app: AppId,
    pub worker: NodeId,
    pub path: Path,
    pub swap_prob: f64,
    pub e2e_fidelity: f64,
    /// Deficit charged per grant by the DRR scheduler.
    pub cost: u32,
}

impl Flow {
    pub fn new(graph: &NetworkGraph, app: AppId, path: Path, cost_mode: CostMode) -> Self {
        Self {
            app,
            worker: path.target(),
            swap_prob: path_swap_prob(&path, graph),
            e2e_fidelity: path_fidelity(&path, graph),
            cost: cost_mode.cost(path.hop_count()),
            path,
        }
    }

    pub fn edges(&self) -> &[EdgeId] {
        self.path.edges()
    }

    pub fn hop_count(&self) -> usize {
        self.path.hop_count()
    }
}

/// One flow per (app, worker) pair, grouped by app in worker-id order.
pub fn build_flows(
    graph: &NetworkGraph,
    apps: &[Application],
    assignment: &Assignment,
    cost_mode: CostMode,
) -> Result<Vec<Vec<Flow>>, RoutingError> {
    apps.iter()
        .map(|app| {
            assignment
                .workers(app.id)
                .iter()
                .map(|&w| Ok(Flow::new(graph, app.id, shortest_path(graph, app.host, w)?, cost_mode)))
                .collect()
        })
        .collect()
}

/// Minimum-hop path from `src` to `dst`.
///
/// Ties are broken towards the lexicographically smallest node sequence:
/// the search expands neighbors in ascending id order and keeps the first
/// parent that reaches each node.
pub fn shortest_path(graph: &NetworkGraph, src: NodeId, dst: NodeId) -> Result<Path, RoutingError> {
    assert!(src != dst, "shortest_path needs distinct endpoints");
    let n = graph.node_count();
    let mut parent: Vec<Option<(NodeId, EdgeId)>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut queue = VecDeque::new();
    visited[src.index()] = true;
    queue.push_back(src);

    while let Some(u) = queue.pop_front() {
        if u == dst {
            break;
        }
        for &(v, e) in graph.neighbors(u) {
            if !visited[v.index()] {
                visited[v.index()] = true;
                parent[v.index()] = Some((u, e));
                queue.push_back(v);
            }
        }
    }
    if !visited[dst.index()] {
        return Err(RoutingError::NoPath { src, dst });
    }

    let mut nodes = vec![dst];
    let mut edges = Vec::new();
    let mut cur = dst;
    while let Some((p, e)) = parent[cur.index()] {
        nodes.push(p);
        edges.push(e);
        cur = p;
    }
    nodes.reverse();
    edges.reverse();
    Ok(Path { nodes, edges })
}

/// Probability that every swap along the path succeeds.
pub fn path_swap_prob(path: &Path, graph: &NetworkGraph) -> f64 {
    path.intermediates()
        .iter()
        .map(|&n| graph.node(n).swap_success_prob)
        .product()
}

/// Werner fidelity of the end-to-end pair obtained by swapping along the path.
pub fn path_fidelity(path: &Path, graph: &NetworkGraph) -> f64 {
    let mut fids = path.edges().iter().map(|&e| graph.link(e).fidelity);
    let first = fids.next().expect("path has at least one edge");
    fids.fold(first, swap_fidelity)
}

/// Fidelity after swapping two Werner pairs of fidelity `a` and `b`.
#[inline]
pub fn swap_fidelity(a: f64, b: f64) -> f64 {
    a * b + (1.0 - a) * (1.0 - b) / 3.0
}

/// Candidates reachable from the host whose shortest path meets the
/// application's fidelity threshold.
pub fn eligible_workers(graph: &NetworkGraph, app: &Application) -> Result<BTreeSet<NodeId>, RoutingError> {
    let eligible: BTreeSet<NodeId> = app
        .candidates
        .iter()
        .copied()
        .filter(|&c| {
            shortest_path(graph, app.host, c)
                .map(|p| path_fidelity(&p, graph) >= app.min_fidelity)
                .unwrap_or(false)
        })
        .collect();
    if eligible.len() < app.workers_needed as usize {
        return Err(RoutingError::EmptyEligibleSet {
            app: app.id,
            eligible: eligible.len(),
            needed: app.workers_needed,
        });
    }
    Ok(eligible)
}

/// Eligible workers of every application, or one diagnostic per starved app.
pub fn eligible_sets(scenario: &Scenario) -> Result<Vec<BTreeSet<NodeId>>, Vec<Diagnostic>> {
    let mut sets = Vec::with_capacity(scenario.apps().len());
    let mut diags = Vec::new();
    for (i, app) in scenario.apps().iter().enumerate() {
        match eligible_workers(scenario.graph(), app) {
            Ok(s) => sets.push(s),
            Err(e) => diags.push(Diagnostic::new(format!("apps[{i}].candidates"), e.to_string())),
        }
    }
    if diags.is_empty() {
        Ok(sets)
    } else {
        Err(diags)
    }
}
