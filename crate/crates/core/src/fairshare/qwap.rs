//! Worker assignment solvers: random baseline, load-balancing greedy, and
//! exhaustive enumeration under the lexicographic max-min objective.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use itertools::Itertools;
use rand::Rng;

use super::{lex_cmp_tol, predicted_app_rates, FairnessScore, FairshareError};
use crate::model::{Application, Assignment, NetworkGraph, NodeId};
use crate::routing::{eligible_workers, shortest_path};

pub const DEFAULT_EXHAUSTIVE_LIMIT: u128 = 1_000_000;

fn eligible_lists(graph: &NetworkGraph, apps: &[Application]) -> Result<Vec<Vec<NodeId>>, FairshareError> {
    apps.iter()
        .map(|a| Ok(eligible_workers(graph, a)?.into_iter().collect()))
        .collect()
}

/// Uniform random `workers_needed`-subset of each app's eligible workers.
pub fn qwap_random<R: Rng + ?Sized>(
    graph: &NetworkGraph,
    apps: &[Application],
    rng: &mut R,
) -> Result<Assignment, FairshareError> {
    let eligible = eligible_lists(graph, apps)?;
    let pools = apps
        .iter()
        .zip(&eligible)
        .map(|(app, el)| {
            rand::seq::index::sample(rng, el.len(), app.workers_needed as usize)
                .into_iter()
                .map(|i| el[i])
                .collect()
        })
        .collect();
    Ok(Assignment::new(pools))
}

/// Greedy assignment balancing normalized link load.
///
/// Apps are served by descending weight (ties by id). Each worker slot goes
/// to the candidate whose addition yields the lexicographically smallest
/// descending-sorted vector of `Σ flow_weight / effective_capacity` per link,
/// ties to the smallest node id.
pub fn qwap_greedy(graph: &NetworkGraph, apps: &[Application]) -> Result<Assignment, FairshareError> {
    let eligible = eligible_lists(graph, apps)?;
    let caps = graph.effective_capacities();
    let mut load = vec![0.0; caps.len()];

    let mut order: Vec<usize> = (0..apps.len()).collect();
    order.sort_by(|&a, &b| apps[b].weight.total_cmp(&apps[a].weight).then(a.cmp(&b)));

    let mut pools = vec![BTreeSet::new(); apps.len()];
    for i in order {
        let app = &apps[i];
        let phi = app.weight / f64::from(app.workers_needed);
        let paths = eligible[i]
            .iter()
            .map(|&w| Ok((w, shortest_path(graph, app.host, w)?)))
            .collect::<Result<Vec<_>, FairshareError>>()?;

        for _ in 0..app.workers_needed {
            let mut best: Option<(usize, Vec<f64>)> = None;
            for (k, (w, path)) in paths.iter().enumerate() {
                if pools[i].contains(w) {
                    continue;
                }
                let mut trial = load.clone();
                for e in path.edges() {
                    trial[e.index()] += phi / caps[e.index()];
                }
                trial.sort_by(|a, b| b.total_cmp(a));
                let better = match &best {
                    None => true,
                    Some((_, v)) => lex_cmp_tol(&trial, v) == Ordering::Less,
                };
                if better {
                    best = Some((k, trial));
                }
            }
            let (k, _) = best.expect("enough eligible workers");
            let (w, path) = &paths[k];
            for e in path.edges() {
                load[e.index()] += phi / caps[e.index()];
            }
            pools[i].insert(*w);
        }
    }
    Ok(Assignment::new(pools))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of assignments the exhaustive solver would enumerate.
pub fn search_space_size(graph: &NetworkGraph, apps: &[Application]) -> Result<u128, FairshareError> {
    let eligible = eligible_lists(graph, apps)?;
    Ok(apps
        .iter()
        .zip(&eligible)
        .map(|(a, el)| binomial(el.len(), a.workers_needed as usize))
        .fold(1u128, u128::saturating_mul))
}

/// Exact QWAP optimum by enumeration.
///
/// Assignments are visited with apps in id order and each app's subsets in
/// lexicographic order; the first one with the lexicographically largest
/// ascending vector of weighted delivered rates wins.
pub fn qwap_exhaustive(graph: &NetworkGraph, apps: &[Application], limit: u128) -> Result<Assignment, FairshareError> {
    let size = search_space_size(graph, apps)?;
    if size > limit {
        return Err(FairshareError::SearchSpaceTooLarge { size, limit });
    }
    if apps.is_empty() {
        return Ok(Assignment::default());
    }
    let eligible = eligible_lists(graph, apps)?;
    let choices: Vec<Vec<BTreeSet<NodeId>>> = apps
        .iter()
        .zip(&eligible)
        .map(|(a, el)| {
            el.iter()
                .copied()
                .combinations(a.workers_needed as usize)
                .map(|c| c.into_iter().collect())
                .collect()
        })
        .collect();

    let mut best: Option<(FairnessScore, Assignment)> = None;
    for pools in choices.into_iter().multi_cartesian_product() {
        let candidate = Assignment::new(pools);
        let score = FairnessScore::from_rates(&predicted_app_rates(graph, apps, &candidate)?);
        if best.as_ref().is_none_or(|(b, _)| score.compare(b) == Ordering::Greater) {
            best = Some((score, candidate));
        }
    }
    Ok(best.expect("non-empty search space").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AppId, Node, NodeKind, QuantumLink};
    use crate::routing::eligible_sets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(i: usize) -> Node {
        Node::new(i, NodeKind::Computation, 1.0)
    }

    fn set(ids: &[u32]) -> BTreeSet<NodeId> {
        ids.iter().map(|&i| NodeId(i)).collect()
    }

    fn score(g: &NetworkGraph, apps: &[Application], a: &Assignment) -> FairnessScore {
        FairnessScore::from_rates(&predicted_app_rates(g, apps, a).unwrap())
    }

    /// Host 0 with workers 1, 2, 3 on private links of capacity 2.
    fn star() -> (NetworkGraph, Vec<Application>) {
        let nodes = (0..4).map(comp).collect();
        let links = (1..4).map(|w| QuantumLink::new(w - 1, 0, w, 2, 1.0, 1.0)).collect();
        let g = NetworkGraph::new(nodes, links).unwrap();
        (g, vec![Application::new(0, 0, 1.0, 1, &[1, 2, 3])])
    }

    #[test]
    fn random_forced_choice() {
        let (g, mut apps) = star();
        apps[0].workers_needed = 3;
        for seed in 0..20 {
            let a = qwap_random(&g, &apps, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a.workers(AppId(0)), &set(&[1, 2, 3]));
        }
    }

    #[test]
    fn random_is_seeded() {
        let (g, mut apps) = star();
        apps[0].workers_needed = 2;
        let a = qwap_random(&g, &apps, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = qwap_random(&g, &apps, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_is_uniform() {
        let (g, apps) = star();
        let n = 10_000;
        let mut counts = [0u32; 3];
        for seed in 0..n {
            let a = qwap_random(&g, &apps, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let w = *a.workers(AppId(0)).first().unwrap();
            counts[w.index() - 1] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((f64::from(c) - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn greedy_avoids_loaded_link() {
        // app 0 (weight 2) is forced onto 0-1-2; app 1 at host 0 picks
        // worker 2 (shares link 0-1) or worker 3 (disjoint link 0-3)
        let nodes = vec![comp(0), Node::new(1, NodeKind::Repeater, 1.0), comp(2), comp(3)];
        let links = vec![
            QuantumLink::new(0, 0, 1, 2, 1.0, 1.0),
            QuantumLink::new(1, 1, 2, 2, 1.0, 1.0),
            QuantumLink::new(2, 0, 3, 2, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![
            Application::new(0, 0, 2.0, 1, &[2]),
            Application::new(1, 0, 1.0, 1, &[2, 3]),
        ];
        let a = qwap_greedy(&g, &apps).unwrap();
        assert_eq!(a.workers(AppId(1)), &set(&[3]));
    }

    #[test]
    fn greedy_tie_goes_to_smallest_id() {
        let (g, apps) = star();
        let a = qwap_greedy(&g, &apps).unwrap();
        assert_eq!(a.workers(AppId(0)), &set(&[1]));
    }

    /// Dumbbell: hosts 0, 1 and workers 4, 5 hang off routers 2 and 3,
    /// bridged by link 2-3; worker 6 sits on router 2 next to the hosts.
    fn dumbbell(q: f64) -> (NetworkGraph, Vec<Application>) {
        let nodes = vec![
            comp(0),
            comp(1),
            Node::new(2, NodeKind::Repeater, q),
            Node::new(3, NodeKind::Repeater, q),
            comp(4),
            comp(5),
            comp(6),
        ];
        let links = vec![
            QuantumLink::new(0, 0, 2, 4, 1.0, 1.0),
            QuantumLink::new(1, 1, 2, 4, 1.0, 1.0),
            QuantumLink::new(2, 2, 3, 2, 1.0, 1.0),
            QuantumLink::new(3, 3, 4, 4, 1.0, 1.0),
            QuantumLink::new(4, 3, 5, 4, 1.0, 1.0),
            QuantumLink::new(5, 2, 6, 3, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![
            Application::new(0, 0, 2.0, 1, &[4, 6]),
            Application::new(1, 1, 1.0, 1, &[5, 6]),
            Application::new(2, 0, 1.0, 1, &[4, 5]),
        ];
        (g, apps)
    }

    #[test]
    fn greedy_matches_exhaustive_on_balanced_dumbbell() {
        // lossless, unit weights, bridge 2-3 and spur 2-6 of capacity 2.
        // App 2 always crosses the bridge; keeping it alone there forces
        // apps 0 and 1 onto the spur, so every assignment has min 1 and the
        // optimum is [1, 1, 2]. Greedy: 0 -> 6, 1 -> 5, 2 -> 4.
        let nodes = vec![
            comp(0),
            comp(1),
            Node::new(2, NodeKind::Repeater, 1.0),
            Node::new(3, NodeKind::Repeater, 1.0),
            comp(4),
            comp(5),
            comp(6),
        ];
        let links = vec![
            QuantumLink::new(0, 0, 2, 4, 1.0, 1.0),
            QuantumLink::new(1, 1, 2, 4, 1.0, 1.0),
            QuantumLink::new(2, 2, 3, 2, 1.0, 1.0),
            QuantumLink::new(3, 3, 4, 4, 1.0, 1.0),
            QuantumLink::new(4, 3, 5, 4, 1.0, 1.0),
            QuantumLink::new(5, 2, 6, 2, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![
            Application::new(0, 0, 1.0, 1, &[4, 6]),
            Application::new(1, 1, 1.0, 1, &[5, 6]),
            Application::new(2, 0, 1.0, 1, &[4, 5]),
        ];
        let greedy = qwap_greedy(&g, &apps).unwrap();
        assert_eq!(greedy, Assignment::new(vec![set(&[6]), set(&[5]), set(&[4])]));
        let exact = qwap_exhaustive(&g, &apps, DEFAULT_EXHAUSTIVE_LIMIT).unwrap();
        assert_eq!(score(&g, &apps, &exact).values(), &[1.0, 1.0, 2.0]);
        assert_eq!(
            score(&g, &apps, &greedy).compare(&score(&g, &apps, &exact)),
            Ordering::Equal
        );
    }

    #[test]
    fn exhaustive_dominates_greedy_on_dumbbell() {
        // greedy's load metric ignores swap loss and sends app 1 across the
        // bridge; the optimum shares worker 6 instead
        let (g, apps) = dumbbell(0.9);
        let greedy = qwap_greedy(&g, &apps).unwrap();
        let exact = qwap_exhaustive(&g, &apps, DEFAULT_EXHAUSTIVE_LIMIT).unwrap();
        assert_eq!(greedy.workers(AppId(1)), &set(&[5]));
        assert_eq!(exact.workers(AppId(1)), &set(&[6]));
        let (sg, se) = (score(&g, &apps, &greedy), score(&g, &apps, &exact));
        assert_eq!(se.compare(&sg), Ordering::Greater);
        assert!((sg.min() - 0.81).abs() < 1e-12 && (se.min() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_single_app_picks_best() {
        // worker 2 behind a slow link, worker 1 direct
        let nodes = (0..3).map(comp).collect();
        let links = vec![
            QuantumLink::new(0, 0, 1, 3, 1.0, 1.0),
            QuantumLink::new(1, 0, 2, 1, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![Application::new(0, 0, 1.0, 1, &[1, 2])];
        let a = qwap_exhaustive(&g, &apps, 10).unwrap();
        assert_eq!(a.workers(AppId(0)), &set(&[1]));
    }

    #[test]
    fn exhaustive_reroutes_around_bottleneck() {
        // both apps can use worker 2 over the shared link 1-2; app 1 may
        // instead use worker 3 on its own link.
        let nodes = (0..4).map(comp).collect();
        let links = vec![
            QuantumLink::new(0, 0, 1, 2, 1.0, 1.0),
            QuantumLink::new(1, 1, 2, 2, 1.0, 1.0),
            QuantumLink::new(2, 1, 3, 2, 1.0, 1.0),
        ];
        let g = NetworkGraph::new(nodes, links).unwrap();
        let apps = vec![
            Application::new(0, 0, 1.0, 1, &[2]),
            Application::new(1, 1, 1.0, 1, &[2, 3]),
        ];
        // hand enumeration: {2,2} shares link 1-2 -> (1, 1); {2,3} -> (2, 2)
        let shared = Assignment::new(vec![set(&[2]), set(&[2])]);
        let split = Assignment::new(vec![set(&[2]), set(&[3])]);
        assert_eq!(score(&g, &apps, &shared).values(), &[1.0, 1.0]);
        assert_eq!(score(&g, &apps, &split).values(), &[2.0, 2.0]);
        assert_eq!(qwap_exhaustive(&g, &apps, 10).unwrap(), split);
    }

    #[test]
    fn exhaustive_guard() {
        let (g, apps) = dumbbell(0.9);
        assert_eq!(search_space_size(&g, &apps).unwrap(), 8);
        assert_eq!(
            qwap_exhaustive(&g, &apps, 7),
            Err(FairshareError::SearchSpaceTooLarge { size: 8, limit: 7 })
        );
    }

    #[test]
    fn solvers_return_valid_assignments() {
        let (g, apps) = dumbbell(0.9);
        let nodes = g.nodes().to_vec();
        let links = g.links().to_vec();
        let scenario = crate::model::validate_scenario(&crate::model::ScenarioSpec {
            nodes,
            links,
            apps: apps.clone(),
            sim: crate::engine::SimConfig::new(1),
        })
        .unwrap();
        let eligible = eligible_sets(&scenario).unwrap();
        for a in [
            qwap_greedy(&g, &apps).unwrap(),
            qwap_exhaustive(&g, &apps, 100).unwrap(),
            qwap_random(&g, &apps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(),
        ] {
            a.check(&apps, &eligible).unwrap();
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(6, 6), 1);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }
}
