use crate::fairshare::jain_index;
use crate::model::{AppId, Assignment};
use crate::scheduling::Policy;

/// Per-slot accounting: what each link offered and what each flow got.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotLedger {
    pub slot: u64,
    /// Pairs generated on each link this slot.
    pub sampled: Vec<u32>,
    pub residual: Vec<u32>,
    /// Grants on each link, summed over the flows crossing it.
    pub edge_grants: Vec<u32>,
    /// `(app, flow index, grants, successes)` for every flow with a grant.
    pub flows: Vec<FlowLedger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowLedger {
    pub app: AppId,
    pub flow: usize,
    pub grants: u32,
    pub successes: u32,
}

impl SlotLedger {
    /// Number of conservation violations in this slot: links granted beyond
    /// their sampled capacity plus flows with more successes than grants.
    pub fn violations(&self) -> usize {
        let edges = self
            .edge_grants
            .iter()
            .zip(&self.sampled)
            .filter(|(g, c)| g > c)
            .count();
        let flows = self.flows.iter().filter(|f| f.successes > f.grants).count();
        edges + flows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppMetrics {
    pub app: AppId,
    pub weight: f64,
    pub grants: u64,
    pub delivered: u64,
    /// Requests issued in the measured window; equals `grants` with
    /// backlogged traffic, where each grant consumes a fresh request.
    pub attempts: u64,
    latency_sum: u64,
    latency_count: u64,
}

impl AppMetrics {
    pub(crate) fn new(app: AppId, weight: f64) -> Self {
        Self {
            app,
            weight,
            grants: 0,
            delivered: 0,
            attempts: 0,
            latency_sum: 0,
            latency_count: 0,
        }
    }

    pub(crate) fn record_latency(&mut self, slots: u64) {
        self.latency_sum += slots;
        self.latency_count += 1;
    }
}

/// Results of one run, over the measured window `[warmup, slots)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub seed: u64,
    pub policy: Policy,
    pub slots: u64,
    pub measured_slots: u64,
    pub poisson: bool,
    pub assignment: Assignment,
    pub apps: Vec<AppMetrics>,
    pub edge_grants: Vec<u64>,
    pub edge_effective_capacity: Vec<f64>,
    /// Conservation violations seen over all slots, warmup included.
    pub violations: u64,
}

impl Metrics {
    pub fn rate_per_slot(&self, app: AppId) -> f64 {
        self.apps[app.index()].delivered as f64 / self.measured_slots as f64
    }

    pub fn weighted_rate(&self, app: AppId) -> f64 {
        self.rate_per_slot(app) / self.apps[app.index()].weight
    }

    /// Mean slots from arrival to grant; only defined with Poisson traffic.
    pub fn mean_latency(&self, app: AppId) -> Option<f64> {
        let a = &self.apps[app.index()];
        (self.poisson && a.latency_count > 0).then(|| a.latency_sum as f64 / a.latency_count as f64)
    }

    pub fn total_delivered(&self) -> u64 {
        self.apps.iter().map(|a| a.delivered).sum()
    }

    /// Grants per link normalized by expected generated pairs.
    pub fn utilization(&self) -> Vec<f64> {
        self.edge_grants
            .iter()
            .zip(&self.edge_effective_capacity)
            .map(|(&g, &c)| g as f64 / (self.measured_slots as f64 * c))
            .collect()
    }

    /// Jain index over weighted delivered rates; `None` when nothing was delivered.
    pub fn jain_weighted(&self) -> Option<f64> {
        let v: Vec<f64> = (0..self.apps.len())
            .map(|a| self.weighted_rate(AppId::from(a)))
            .collect();
        jain_index(&v).ok()
    }

    /// Flat `(name, value)` view used for cross-replication aggregation.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for a in &self.apps {
            let id = a.app;
            out.push((format!("app{id}.grants"), a.grants as f64));
            out.push((format!("app{id}.delivered"), a.delivered as f64));
            out.push((format!("app{id}.rate_per_slot"), self.rate_per_slot(id)));
            out.push((format!("app{id}.weighted_rate"), self.weighted_rate(id)));
            if let Some(l) = self.mean_latency(id) {
                out.push((format!("app{id}.mean_latency_slots"), l));
            }
        }
        if let Some(j) = self.jain_weighted() {
            out.push(("jain_weighted".into(), j));
        }
        out.push(("total_delivered".into(), self.total_delivered() as f64));
        for (e, u) in self.utilization().into_iter().enumerate() {
            out.push((format!("edge_{e}_util"), u));
        }
        out
    }
}

/// Mean and sample standard deviation of one metric across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStat {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

/// Aggregates scalars by name, in order of first appearance. Metrics missing
/// from some runs (e.g. undefined latency) are aggregated over the runs that
/// report them.
pub fn aggregate(runs: &[Metrics]) -> Vec<AggregateStat> {
    let mut names: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for m in runs {
        for (name, v) in m.scalars() {
            match names.iter().position(|n| *n == name) {
                Some(i) => values[i].push(v),
                None => {
                    names.push(name);
                    values.push(vec![v]);
                }
            }
        }
    }
    names
        .into_iter()
        .zip(values)
        .map(|(name, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std_dev = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            AggregateStat {
                name,
                mean,
                std_dev,
                count: n,
            }
        })
        .collect()
}
