use crate::model::EdgeId;

/// A fluid flow for the max-min computation: the links it crosses and its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidFlow {
    pub edges: Vec<EdgeId>,
    pub weight: f64,
}

impl FluidFlow {
    pub fn new(edges: impl IntoIterator<Item = EdgeId>, weight: f64) -> Self {
        Self {
            edges: edges.into_iter().collect(),
            weight,
        }
    }
}

/// Relative slack under which a link counts as saturated.
const SATURATION_TOL: f64 = 1e-12;

/// Weighted max-min fair rates by progressive filling.
///
/// A common level `t` rises, every unfrozen flow running at `weight * t`,
/// until a link saturates; flows crossing saturated links freeze at their
/// current rate and the fill continues with the rest. Each flow must cross at
/// least one link and every capacity must be positive.
pub fn maxmin_rates(flows: &[FluidFlow], capacities: &[f64]) -> Vec<f64> {
    let mut rates = vec![0.0; flows.len()];
    let mut frozen = vec![false; flows.len()];
    // load committed by frozen flows and weight of unfrozen flows, per link
    let mut frozen_load = vec![0.0; capacities.len()];
    let mut open_weight = vec![0.0; capacities.len()];
    let mut open_count = vec![0usize; capacities.len()];
    for f in flows {
        assert!(!f.edges.is_empty(), "flow crosses no link");
        assert!(f.weight > 0.0, "flow weight must be positive");
        for e in &f.edges {
            open_weight[e.index()] += f.weight;
            open_count[e.index()] += 1;
        }
    }

    let mut remaining = flows.len();
    while remaining > 0 {
        // level at which each loaded link would saturate
        let level = |e: usize| (capacities[e] - frozen_load[e]).max(0.0) / open_weight[e];
        let t = (0..capacities.len())
            .filter(|&e| open_count[e] > 0)
            .map(level)
            .fold(f64::INFINITY, f64::min);
        debug_assert!(t.is_finite());

        let saturated: Vec<bool> = (0..capacities.len())
            .map(|e| open_count[e] > 0 && level(e) <= t * (1.0 + SATURATION_TOL))
            .collect();
        for (i, f) in flows.iter().enumerate() {
            if frozen[i] || !f.edges.iter().any(|e| saturated[e.index()]) {
                continue;
            }
            frozen[i] = true;
            remaining -= 1;
            rates[i] = f.weight * t;
            for e in &f.edges {
                frozen_load[e.index()] += rates[i];
                open_weight[e.index()] -= f.weight;
                open_count[e.index()] -= 1;
            }
        }
    }
    rates
}
