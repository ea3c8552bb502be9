//! Seeded time-slotted simulation.
//!
//! Each slot: sample link capacities, enqueue arrivals, schedule grants,
//! sample swap successes, accumulate metrics. Entangled pairs live for one
//! slot only; unused capacity is lost. Slots before `warmup` run normally but
//! are excluded from every metric.

mod metrics;
pub mod rng;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{aggregate, AggregateStat, AppMetrics, FlowLedger, Metrics, SlotLedger};

use crate::fairshare::{qwap_exhaustive, qwap_greedy, qwap_random, FairshareError};
use crate::model::{Assignment, Diagnostic, NodeId, QuantumLink, Scenario};
use crate::routing::{build_flows, eligible_sets, Flow, RoutingError};
use crate::scheduling::{CostMode, Policy, SchedulerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    /// Every app always has a pending request.
    #[default]
    Backlogged,
    /// Requests arrive per slot with Poisson counts of mean `arrival_rate`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMode {
    /// `capacity_max * gen_success_prob` pairs every slot (must be integral).
    #[default]
    Deterministic,
    /// `Binomial(capacity_max, gen_success_prob)` pairs per slot.
    Stochastic,
}

/// Where the worker pools come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentSource {
    /// Explicit pools, one list per app in id order.
    Given(Vec<Vec<NodeId>>),
    #[default]
    Greedy,
    Random,
    Exhaustive,
}

fn default_policy() -> Policy {
    Policy::Drr
}

fn default_one() -> u32 {
    1
}

fn default_limit() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub slots: u64,
    #[serde(default)]
    pub warmup: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub traffic: TrafficMode,
    #[serde(default)]
    pub capacity_mode: CapacityMode,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub cost_mode: CostMode,
    #[serde(default = "default_one")]
    pub quantum_base: u32,
    #[serde(default)]
    pub assignment: AssignmentSource,
    #[serde(default = "default_limit")]
    pub exhaustive_limit: u64,
    #[serde(default = "default_one")]
    pub replications: u32,
}

impl SimConfig {
    /// Defaults: backlogged DRR with unit cost, deterministic capacity,
    /// greedy assignment, seed 0, no warmup.
    pub fn new(slots: u64) -> Self {
        Self {
            slots,
            warmup: 0,
            seed: 0,
            traffic: TrafficMode::default(),
            capacity_mode: CapacityMode::default(),
            policy: default_policy(),
            cost_mode: CostMode::default(),
            quantum_base: 1,
            assignment: AssignmentSource::default(),
            exhaustive_limit: default_limit(),
            replications: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Fairshare(#[from] FairshareError),
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

/// Capacity available on `link` this slot.
pub fn sample_capacity<R: Rng + ?Sized>(link: &QuantumLink, mode: CapacityMode, rng: &mut R) -> u32 {
    match mode {
        CapacityMode::Deterministic => link.effective_capacity().round() as u32,
        CapacityMode::Stochastic => {
            let p = link.gen_success_prob;
            (0..link.capacity_max).filter(|_| rng.gen_bool(p)).count() as u32
        }
    }
}

/// Number of granted attempts that survive every swap along the flow.
pub fn resolve_successes<R: Rng + ?Sized>(grants: u32, swap_prob: f64, rng: &mut R) -> u32 {
    (0..grants).filter(|_| rng.gen_bool(swap_prob)).count() as u32
}

/// Poisson draw by Knuth's multiplication method, exact for small means.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0;
    let mut p: f64 = rng.gen();
    while p > limit {
        k += 1;
        p *= rng.gen::<f64>();
    }
    k
}

/// Resolves the worker pools configured for the scenario. Random assignment
/// draws from the `assignment` stream of `seed`.
pub fn resolve_assignment(scenario: &Scenario, seed: u64) -> Result<Assignment, EngineError> {
    let eligible = eligible_sets(scenario).map_err(EngineError::Invalid)?;
    let (graph, apps) = (scenario.graph(), scenario.apps());
    let assignment = match &scenario.sim().assignment {
        AssignmentSource::Given(pools) => Assignment::new(pools.iter().map(|p| p.iter().copied().collect()).collect()),
        AssignmentSource::Greedy => qwap_greedy(graph, apps)?,
        AssignmentSource::Random => qwap_random(graph, apps, &mut rng::stream(seed, rng::ASSIGNMENT_STREAM))?,
        AssignmentSource::Exhaustive => qwap_exhaustive(graph, apps, u128::from(scenario.sim().exhaustive_limit))?,
    };
    assignment.check(apps, &eligible).map_err(EngineError::Invalid)?;
    Ok(assignment)
}

/// A single run in progress. Strictly single-threaded.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    seed: u64,
    slot: u64,
    assignment: Assignment,
    flows: Vec<Vec<Flow>>,
    scheduler: SchedulerState,
    capacity_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    success_rng: ChaCha8Rng,
    apps: Vec<AppMetrics>,
    edge_grants: Vec<u64>,
    violations: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Result<Self, EngineError> {
        let assignment = resolve_assignment(scenario, seed)?;
        Self::with_assignment(scenario, seed, assignment)
    }

    pub fn with_assignment(scenario: &'a Scenario, seed: u64, assignment: Assignment) -> Result<Self, EngineError> {
        let sim = scenario.sim();
        let flows = build_flows(scenario.graph(), scenario.apps(), &assignment, sim.cost_mode)?;
        let weights: Vec<f64> = scenario.apps().iter().map(|a| a.weight).collect();
        let scheduler = SchedulerState::for_flows(
            sim.policy,
            sim.quantum_base,
            &weights,
            &flows,
            sim.traffic == TrafficMode::Backlogged,
        );
        Ok(Self {
            scenario,
            seed,
            slot: 0,
            assignment,
            flows,
            scheduler,
            capacity_rng: rng::stream(seed, rng::CAPACITY_STREAM),
            arrival_rng: rng::stream(seed, rng::ARRIVAL_STREAM),
            success_rng: rng::stream(seed, rng::SUCCESS_STREAM),
            apps: scenario
                .apps()
                .iter()
                .map(|a| AppMetrics::new(a.id, a.weight))
                .collect(),
            edge_grants: vec![0; scenario.graph().link_count()],
            violations: 0,
        })
    }

    pub fn flows(&self) -> &[Vec<Flow>] {
        &self.flows
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.scenario.sim().slots
    }

    /// Advances one slot and returns its ledger.
    pub fn step(&mut self) -> SlotLedger {
        let sim = self.scenario.sim();
        let graph = self.scenario.graph();
        let slot = self.slot;
        let measured = slot >= sim.warmup;

        let sampled: Vec<u32> = graph
            .links()
            .iter()
            .map(|l| sample_capacity(l, sim.capacity_mode, &mut self.capacity_rng))
            .collect();

        if sim.traffic == TrafficMode::Poisson {
            for app in self.scenario.apps() {
                let n = sample_poisson(app.arrival_rate, &mut self.arrival_rng);
                self.scheduler
                    .enqueue_arrivals(slot, std::iter::repeat_n(app.id, n as usize));
                if measured {
                    self.apps[app.id.index()].attempts += u64::from(n);
                }
            }
        }

        let schedule = self.scheduler.schedule_slot(slot, &self.flows, &sampled);

        let mut per_flow: Vec<FlowLedger> = Vec::new();
        for g in &schedule.grants {
            match per_flow.iter_mut().find(|f| f.app == g.app && f.flow == g.flow) {
                Some(f) => f.grants += 1,
                None => per_flow.push(FlowLedger {
                    app: g.app,
                    flow: g.flow,
                    grants: 1,
                    successes: 0,
                }),
            }
            if measured {
                let m = &mut self.apps[g.app.index()];
                m.grants += 1;
                if sim.traffic == TrafficMode::Poisson {
                    m.record_latency(slot - g.request.arrival_slot);
                } else {
                    m.attempts += 1;
                }
            }
        }
        per_flow.sort_by_key(|f| (f.app, f.flow));

        let mut edge_grants = vec![0u32; graph.link_count()];
        for f in &mut per_flow {
            let flow = &self.flows[f.app.index()][f.flow];
            f.successes = resolve_successes(f.grants, flow.swap_prob, &mut self.success_rng);
            for e in flow.edges() {
                edge_grants[e.index()] += f.grants;
            }
            if measured {
                self.apps[f.app.index()].delivered += u64::from(f.successes);
            }
        }
        if measured {
            for (acc, g) in self.edge_grants.iter_mut().zip(&edge_grants) {
                *acc += u64::from(*g);
            }
        }

        let ledger = SlotLedger {
            slot,
            sampled,
            residual: schedule.residual,
            edge_grants,
            flows: per_flow,
        };
        let v = ledger.violations();
        debug_assert_eq!(v, 0, "conservation violated in slot {slot}: {ledger:?}");
        self.violations += v as u64;
        self.slot += 1;
        ledger
    }

    pub fn finish(self) -> Metrics {
        let sim = self.scenario.sim();
        Metrics {
            seed: self.seed,
            policy: sim.policy,
            slots: sim.slots,
            measured_slots: sim.slots - sim.warmup,
            poisson: sim.traffic == TrafficMode::Poisson,
            assignment: self.assignment,
            apps: self.apps,
            edge_grants: self.edge_grants,
            edge_effective_capacity: self.scenario.graph().effective_capacities(),
            violations: self.violations,
        }
    }
}

/// Runs the scenario with `seed`, handing every slot's ledger to `observe`.
pub fn run_observed(
    scenario: &Scenario,
    seed: u64,
    mut observe: impl FnMut(&SlotLedger),
) -> Result<Metrics, EngineError> {
    let mut sim = Simulation::new(scenario, seed)?;
    while !sim.is_done() {
        observe(&sim.step());
    }
    Ok(sim.finish())
}

/// Runs the scenario with the seed from its configuration.
pub fn run(scenario: &Scenario) -> Result<Metrics, EngineError> {
    run_observed(scenario, scenario.sim().seed, |_| {})
}

/// Independent replications merged in index order, plus their aggregate.
#[derive(Debug, Clone)]
pub struct Replicated {
    pub runs: Vec<Metrics>,
    pub aggregate: Vec<AggregateStat>,
}

/// Runs `n` replications in parallel; replication `i` uses
/// [`rng::replication_seed`]`(seed, i)`. Output does not depend on thread count.
pub fn replicate(scenario: &Scenario, n: u32) -> Result<Replicated, EngineError> {
    assert!(n >= 1, "at least one replication");
    let master = scenario.sim().seed;
    let runs = (0..u64::from(n))
        .into_par_iter()
        .map(|i| run_observed(scenario, rng::replication_seed(master, i), |_| {}))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(&runs);
    Ok(Replicated { runs, aggregate })
}

/// Cumulative grants per app at the end of each slot, for fairness checks.
pub fn app_grant_history(scenario: &Scenario, seed: u64) -> Result<Vec<Vec<u64>>, EngineError> {
    let n = scenario.apps().len();
    let mut cum = vec![0u64; n];
    let mut out = Vec::new();
    run_observed(scenario, seed, |l| {
        for f in &l.flows {
            cum[f.app.index()] += u64::from(f.grants);
        }
        out.push(cum.clone());
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_scenario, AppId, Application, Node, NodeKind, ScenarioSpec};
    use rand::SeedableRng;

    fn unit_pipe(slots: u64) -> ScenarioSpec {
        ScenarioSpec {
            nodes: vec![
                Node::new(0, NodeKind::Computation, 1.0),
                Node::new(1, NodeKind::Computation, 1.0),
            ],
            links: vec![QuantumLink::new(0, 0, 1, 1, 1.0, 1.0)],
            apps: vec![Application::new(0, 0, 1.0, 1, &[1])],
            sim: SimConfig::new(slots),
        }
    }

    #[test]
    fn capacity_certain_generation() {
        let link = QuantumLink::new(0, 0, 1, 4, 1.0, 1.0);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_capacity(&link, CapacityMode::Deterministic, &mut r), 4);
        assert_eq!(sample_capacity(&link, CapacityMode::Stochastic, &mut r), 4);
    }

    #[test]
    fn stochastic_capacity_is_binomial() {
        let link = QuantumLink::new(0, 0, 1, 4, 0.5, 1.0);
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let draws: Vec<u32> = (0..n)
            .map(|_| sample_capacity(&link, CapacityMode::Stochastic, &mut r))
            .collect();
        assert!(draws.iter().all(|&d| d <= 4));
        let mean = draws.iter().map(|&d| f64::from(d)).sum::<f64>() / n as f64;
        // Binomial(4, 0.5): variance 1
        let sigma = (1.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn success_sampling() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(resolve_successes(17, 1.0, &mut r), 17);
        assert_eq!(resolve_successes(0, 0.5, &mut r), 0);
        let n = 10_000;
        let s = resolve_successes(n, 0.81, &mut r);
        let sigma = (0.81 * 0.19 / f64::from(n)).sqrt();
        assert!((f64::from(s) / f64::from(n) - 0.81).abs() <= 3.0 * sigma);
    }

    #[test]
    fn poisson_moments() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        for lambda in [0.3, 2.0, 30.0] {
            let n = 20_000;
            let xs: Vec<f64> = (0..n).map(|_| f64::from(sample_poisson(lambda, &mut r))).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            assert!(
                (mean - lambda).abs() <= 4.0 * (lambda / n as f64).sqrt(),
                "λ={lambda} mean={mean}"
            );
        }
        assert_eq!(sample_poisson(0.0, &mut r), 0);
    }

    #[test]
    fn uncontended_unit_pipe() {
        let s = validate_scenario(&unit_pipe(100)).unwrap();
        let m = run(&s).unwrap();
        assert_eq!(m.apps[0].delivered, 100);
        assert_eq!(m.rate_per_slot(AppId(0)), 1.0);
        assert_eq!(m.utilization(), vec![1.0]);
        assert_eq!(m.violations, 0);
    }

    #[test]
    fn warmup_excluded() {
        let mut spec = unit_pipe(100);
        spec.sim.warmup = 50;
        let m = run(&validate_scenario(&spec).unwrap()).unwrap();
        assert_eq!(m.apps[0].delivered, 50);
        assert_eq!(m.measured_slots, 50);
        assert_eq!(m.rate_per_slot(AppId(0)), 1.0);
    }

    #[test]
    fn stream_isolation_across_traffic_modes() {
        let mut spec = unit_pipe(200);
        spec.links[0].capacity_max = 5;
        spec.links[0].gen_success_prob = 0.37;
        spec.apps[0].arrival_rate = 1.5;
        spec.sim.capacity_mode = CapacityMode::Stochastic;
        spec.sim.seed = 11;
        let caps = |spec: &ScenarioSpec| {
            let s = validate_scenario(spec).unwrap();
            let mut v = Vec::new();
            run_observed(&s, 11, |l| v.push(l.sampled.clone())).unwrap();
            v
        };
        let backlogged = caps(&spec);
        spec.sim.traffic = TrafficMode::Poisson;
        assert_eq!(backlogged, caps(&spec));
    }

    #[test]
    fn replicate_single_equals_run() {
        let mut spec = unit_pipe(300);
        spec.links[0].capacity_max = 3;
        spec.links[0].gen_success_prob = 0.5;
        spec.sim.capacity_mode = CapacityMode::Stochastic;
        spec.sim.seed = 4;
        let s = validate_scenario(&spec).unwrap();
        let r = replicate(&s, 1).unwrap();
        assert_eq!(r.runs[0], run(&s).unwrap());
        assert!(r.aggregate.iter().all(|a| a.std_dev == 0.0 && a.count == 1));
    }

    #[test]
    fn deterministic_scenario_has_zero_spread() {
        let s = validate_scenario(&unit_pipe(50)).unwrap();
        let r = replicate(&s, 5).unwrap();
        assert!(r.aggregate.iter().all(|a| a.std_dev == 0.0 && a.count == 5));
    }

    #[test]
    fn poisson_latency_recorded() {
        let mut spec = unit_pipe(2000);
        spec.apps[0].arrival_rate = 0.5;
        spec.sim.traffic = TrafficMode::Poisson;
        spec.sim.policy = Policy::Fcfs;
        let m = run(&validate_scenario(&spec).unwrap()).unwrap();
        let lat = m.mean_latency(AppId(0)).unwrap();
        assert!((0.0..5.0).contains(&lat), "{lat}");
        assert!(m.apps[0].grants <= m.apps[0].attempts + 5);
    }
}
