//! Analytical fairness machinery: weighted max-min rates, Jain's index, and
//! the worker-assignment (QWAP) solvers built on them.

mod jain;
mod maxmin;
mod qwap;

use std::cmp::Ordering;

use thiserror::Error;

pub use jain::jain_index;
pub use maxmin::{maxmin_rates, FluidFlow};
pub use qwap::{qwap_exhaustive, qwap_greedy, qwap_random, search_space_size, DEFAULT_EXHAUSTIVE_LIMIT};

use crate::model::{Application, Assignment, NetworkGraph};
use crate::routing::{path_swap_prob, shortest_path, RoutingError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FairshareError {
    #[error("fairness index of an empty vector is undefined")]
    EmptyInput,
    #[error("fairness index of an all-zero vector is undefined")]
    AllZero,
    #[error("fairness index needs finite non-negative values")]
    InvalidValue,
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("exhaustive search space has {size} assignments, above the limit of {limit}; raise --limit to allow it")]
    SearchSpaceTooLarge { size: u128, limit: u128 },
}

/// Predicted steady-state rates of one application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppRate {
    /// Expected grants per slot, summed over the app's flows.
    pub granted: f64,
    /// Expected end-to-end pairs per slot after swap losses.
    pub delivered: f64,
    /// `delivered / weight`.
    pub weighted: f64,
}

/// Max-min prediction of the per-app rates under `assignment`.
///
/// Each (app, worker) pair is one flow on its shortest path with weight
/// `weight / workers_needed`; link capacities are `capacity_max *
/// gen_success_prob`. Granted rates are then discounted by the path's swap
/// success probability.
pub fn predicted_app_rates(
    graph: &NetworkGraph,
    apps: &[Application],
    assignment: &Assignment,
) -> Result<Vec<AppRate>, RoutingError> {
    let mut flows = Vec::new();
    let mut owner = Vec::new();
    let mut swap = Vec::new();
    for app in apps {
        let phi = app.weight / f64::from(app.workers_needed);
        for &w in assignment.workers(app.id) {
            let path = shortest_path(graph, app.host, w)?;
            swap.push(path_swap_prob(&path, graph));
            flows.push(FluidFlow::new(path.edges().iter().copied(), phi));
            owner.push(app.id.index());
        }
    }
    let rates = maxmin_rates(&flows, &graph.effective_capacities());
    let mut out: Vec<AppRate> = vec![
        AppRate {
            granted: 0.0,
            delivered: 0.0,
            weighted: 0.0
        };
        apps.len()
    ];
    for ((r, &a), q) in rates.iter().zip(&owner).zip(&swap) {
        out[a].granted += r;
        out[a].delivered += r * q;
    }
    for (o, app) in out.iter_mut().zip(apps) {
        o.weighted = o.delivered / app.weight;
    }
    Ok(out)
}

/// Ascending weighted delivered rates: the QWAP objective, compared
/// lexicographically (larger minimum first).
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessScore(Vec<f64>);

const SCORE_TOL: f64 = 1e-9;

impl FairnessScore {
    pub fn from_rates(rates: &[AppRate]) -> Self {
        let mut v: Vec<f64> = rates.iter().map(|r| r.weighted).collect();
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Smallest weighted rate, 0 for an empty score.
    pub fn min(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    /// Lexicographic comparison treating values within a relative 1e-9 as equal.
    pub fn compare(&self, other: &Self) -> Ordering {
        lex_cmp_tol(&self.0, &other.0)
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCORE_TOL * a.abs().max(b.abs()).max(1.0)
}

pub(crate) fn lex_cmp_tol(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if !approx_eq(*x, *y) {
            return x.total_cmp(y);
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Node, NodeId, NodeKind, QuantumLink};

    fn single_link(cap: u32, p_gen: f64) -> (NetworkGraph, Vec<Application>, Assignment) {
        let nodes = vec![
            Node::new(0, NodeKind::Computation, 1.0),
            Node::new(1, NodeKind::Computation, 1.0),
        ];
        let g = NetworkGraph::new(nodes, vec![QuantumLink::new(0, 0, 1, cap, p_gen, 1.0)]).unwrap();
        let apps = vec![Application::new(0, 0, 1.0, 1, &[1])];
        (g, apps, Assignment::new(vec![[NodeId(1)].into()]))
    }

    #[test]
    fn sole_user_takes_full_capacity() {
        let (g, apps, a) = single_link(4, 1.0);
        let r = predicted_app_rates(&g, &apps, &a).unwrap();
        assert_eq!(r[0].delivered, 4.0);
        let (g, apps, a) = single_link(4, 0.5);
        assert_eq!(predicted_app_rates(&g, &apps, &a).unwrap()[0].delivered, 2.0);
    }

    #[test]
    fn shared_two_hop_paths_discounted_by_swap() {
        // hosts 0 and 1 reach worker 3 through repeater 2 (q = 0.5); 2-3 is shared
        let nodes = vec![
            Node::new(0, NodeKind::Computation, 1.0),
            Node::new(1, NodeKind::Computation, 1.0),
            Node::new(2, NodeKind::Repeater, 0.5),
            Node::new(3, NodeKind::Computation, 1.0),
        ];
        let links = vec![
            QuantumLink::new(0, 0, 2, 8, 1.0, 1.0),
            QuantumLink::new(1, 1, 2, 8, 1.0, 1.0),
            QuantumLink::new(2, 2, 3, 4, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![
            Application::new(0, 0, 1.0, 1, &[3]),
            Application::new(1, 1, 1.0, 1, &[3]),
        ];
        let a = Assignment::new(vec![[NodeId(3)].into(), [NodeId(3)].into()]);
        let r = predicted_app_rates(&g, &apps, &a).unwrap();
        assert_eq!((r[0].granted, r[1].granted), (2.0, 2.0));
        assert_eq!((r[0].delivered, r[1].delivered), (1.0, 1.0));
    }

    #[test]
    fn score_orders_by_minimum_first() {
        let a = FairnessScore(vec![1.0, 5.0]);
        let b = FairnessScore(vec![2.0, 2.0]);
        assert_eq!(a.compare(&b), Ordering::Less);
        let c = FairnessScore(vec![2.0, 2.0 + 1e-12]);
        assert_eq!(b.compare(&c), Ordering::Equal);
    }
}
