//! Per-slot arbitration of EPR-pair grants among applications.
//!
//! A grant to a flow consumes one unit of residual capacity on every link of
//! its path within the slot. Four disciplines decide who gets the capacity:
//!
//! * FCFS serves all pending requests in global `(arrival_slot, app, seq)`
//!   order, granting each one whose app has a feasible flow.
//! * RR and WRR make repeated passes over the active applications starting
//!   at the head pointer, granting at most 1 (RR) or `weight` (WRR) requests
//!   per visit, until a pass produces no grant.
//! * DRR credits `quantum_base * weight` to every app that can be served when
//!   visited and grants while the deficit covers the flow cost.
//!
//! After each slot the head pointer moves to the successor of the last app
//! that received a grant, so rotation persists across slots.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::AppId;
use crate::routing::Flow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "FCFS", alias = "fcfs")]
    Fcfs,
    #[serde(rename = "RR", alias = "rr")]
    Rr,
    #[serde(rename = "WRR", alias = "wrr")]
    Wrr,
    #[serde(rename = "DRR", alias = "drr")]
    Drr,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Fcfs, Policy::Rr, Policy::Wrr, Policy::Drr];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Fcfs => "FCFS",
            Policy::Rr => "RR",
            Policy::Wrr => "WRR",
            Policy::Drr => "DRR",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FCFS" => Ok(Policy::Fcfs),
            "RR" => Ok(Policy::Rr),
            "WRR" => Ok(Policy::Wrr),
            "DRR" => Ok(Policy::Drr),
            _ => Err(format!("unknown policy `{s}` (expected FCFS, RR, WRR or DRR)")),
        }
    }
}

/// How much deficit a DRR grant consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    #[default]
    Unit,
    /// Charge one unit per hop of the flow's path.
    Hops,
}

impl CostMode {
    pub fn cost(self, hops: usize) -> u32 {
        match self {
            CostMode::Unit => 1,
            CostMode::Hops => u32::try_from(hops).expect("hop count fits u32"),
        }
    }
}

/// A pending entanglement request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Request {
    pub arrival_slot: u64,
    pub app: AppId,
    pub seq: u64,
}

/// One EPR pair granted end to end to `flows[app][flow]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub app: AppId,
    pub flow: usize,
    pub request: Request,
}

/// Outcome of [`SchedulerState::schedule_slot`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotSchedule {
    pub grants: Vec<Grant>,
    /// Per-link capacity left after the grants.
    pub residual: Vec<u32>,
}

#[derive(Debug, Clone)]
enum Queue {
    /// Always holds one more request.
    Backlogged,
    Finite(VecDeque<Request>),
}

/// Mutable scheduler state, owned by a single simulation run.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    policy: Policy,
    quantum_base: u32,
    weights: Vec<f64>,
    max_cost: u32,
    queues: Vec<Queue>,
    next_seq: Vec<u64>,
    active: Vec<AppId>,
    head: Option<AppId>,
    deficits: Vec<f64>,
    cursors: Vec<usize>,
}

impl SchedulerState {
    /// `max_cost` is the largest flow cost in the run, used to cap DRR deficits.
    pub fn new(policy: Policy, quantum_base: u32, weights: &[f64], max_cost: u32, backlogged: bool) -> Self {
        assert!(quantum_base >= 1, "quantum base must be positive");
        assert!(weights.iter().all(|&w| w > 0.0), "weights must be positive");
        if policy == Policy::Wrr {
            assert!(weights.iter().all(|w| w.fract() == 0.0), "WRR needs integer weights");
        }
        assert!(
            !(policy == Policy::Fcfs && backlogged),
            "FCFS is undefined with backlogged traffic"
        );
        let n = weights.len();
        let (queues, active) = if backlogged {
            (vec![Queue::Backlogged; n], (0..n).map(AppId::from).collect())
        } else {
            (vec![Queue::Finite(VecDeque::new()); n], Vec::new())
        };
        let head = active.first().copied();
        Self {
            policy,
            quantum_base,
            weights: weights.to_vec(),
            max_cost: max_cost.max(1),
            queues,
            next_seq: vec![0; n],
            active,
            head,
            deficits: vec![0.0; n],
            cursors: vec![0; n],
        }
    }

    /// Builds a scheduler for `flows`, deriving `max_cost` from them.
    pub fn for_flows(
        policy: Policy,
        quantum_base: u32,
        weights: &[f64],
        flows: &[Vec<Flow>],
        backlogged: bool,
    ) -> Self {
        let max_cost = flows.iter().flatten().map(|f| f.cost).max().unwrap_or(1);
        Self::new(policy, quantum_base, weights, max_cost, backlogged)
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn quantum(&self, app: AppId) -> f64 {
        f64::from(self.quantum_base) * self.weights[app.index()]
    }

    pub fn deficit(&self, app: AppId) -> f64 {
        self.deficits[app.index()]
    }

    pub fn deficit_cap(&self, app: AppId) -> f64 {
        self.quantum(app) + f64::from(self.max_cost)
    }

    pub fn max_cost(&self) -> u32 {
        self.max_cost
    }

    pub fn active(&self) -> &[AppId] {
        &self.active
    }

    pub fn head(&self) -> Option<AppId> {
        self.head
    }

    pub fn cursor(&self, app: AppId) -> usize {
        self.cursors[app.index()]
    }

    pub fn queue_len(&self, app: AppId) -> Option<usize> {
        match &self.queues[app.index()] {
            Queue::Backlogged => None,
            Queue::Finite(q) => Some(q.len()),
        }
    }

    pub fn has_pending(&self, app: AppId) -> bool {
        match &self.queues[app.index()] {
            Queue::Backlogged => true,
            Queue::Finite(q) => !q.is_empty(),
        }
    }

    /// Appends one request per listed app, FIFO; newly backlogged apps join
    /// the tail of the active list. No-op for backlogged queues.
    pub fn enqueue_arrivals(&mut self, slot: u64, arrivals: impl IntoIterator<Item = AppId>) {
        for app in arrivals {
            let i = app.index();
            let Queue::Finite(q) = &mut self.queues[i] else {
                continue;
            };
            let was_empty = q.is_empty();
            q.push_back(Request {
                arrival_slot: slot,
                app,
                seq: self.next_seq[i],
            });
            self.next_seq[i] += 1;
            if was_empty {
                self.active.push(app);
                if self.head.is_none() {
                    self.head = Some(app);
                }
            }
        }
    }

    /// First feasible flow of `app` in cyclic order from its cursor, without
    /// moving the cursor.
    pub fn peek_flow(&self, app: AppId, flows: &[Flow], residual: &[u32]) -> Option<usize> {
        let n = flows.len();
        let start = self.cursors[app.index()] % n.max(1);
        (0..n)
            .map(|k| (start + k) % n)
            .find(|&f| flows[f].edges().iter().all(|e| residual[e.index()] >= 1))
    }

    /// Like [`Self::peek_flow`] but advances the cursor past the returned flow.
    /// `None` means the app is blocked and leaves the cursor untouched.
    pub fn select_flow(&mut self, app: AppId, flows: &[Flow], residual: &[u32]) -> Option<usize> {
        let f = self.peek_flow(app, flows, residual)?;
        self.cursors[app.index()] = (f + 1) % flows.len();
        Some(f)
    }

    /// True when no backlogged app could take one more grant.
    pub fn is_work_conserving(&self, flows: &[Vec<Flow>], residual: &[u32]) -> bool {
        (0..self.queues.len())
            .map(AppId::from)
            .filter(|&a| self.has_pending(a))
            .all(|a| self.peek_flow(a, &flows[a.index()], residual).is_none())
    }

    fn take_request(&mut self, app: AppId, slot: u64) -> Request {
        let i = app.index();
        match &mut self.queues[i] {
            Queue::Backlogged => {
                let seq = self.next_seq[i];
                self.next_seq[i] += 1;
                Request {
                    arrival_slot: slot,
                    app,
                    seq,
                }
            }
            Queue::Finite(q) => q.pop_front().expect("granted app has a pending request"),
        }
    }

    fn grant(&mut self, slot: u64, app: AppId, flow_idx: usize, flow: &Flow, out: &mut SlotSchedule) {
        for e in flow.edges() {
            out.residual[e.index()] -= 1;
        }
        let request = self.take_request(app, slot);
        out.grants.push(Grant {
            app,
            flow: flow_idx,
            request,
        });
    }

    /// Arbitrates one slot's capacity among the pending requests.
    ///
    /// `flows[a]` are the flows of app `a`; `capacities` are the per-link
    /// pairs available in this slot.
    pub fn schedule_slot(&mut self, slot: u64, flows: &[Vec<Flow>], capacities: &[u32]) -> SlotSchedule {
        assert_eq!(flows.len(), self.queues.len(), "one flow list per app");
        let mut out = SlotSchedule {
            grants: Vec::new(),
            residual: capacities.to_vec(),
        };
        match self.policy {
            Policy::Fcfs => self.schedule_fcfs(slot, flows, &mut out),
            Policy::Rr | Policy::Wrr | Policy::Drr => self.schedule_rounds(slot, flows, &mut out),
        }
        debug_assert!(self.is_work_conserving(flows, &out.residual));
        out
    }

    fn schedule_fcfs(&mut self, slot: u64, flows: &[Vec<Flow>], out: &mut SlotSchedule) {
        let mut pending: Vec<Request> = self
            .queues
            .iter()
            .filter_map(|q| match q {
                Queue::Finite(q) => Some(q.iter().copied()),
                Queue::Backlogged => None,
            })
            .flatten()
            .collect();
        pending.sort_unstable();
        for req in pending {
            let app = req.app;
            if let Some(f) = self.select_flow(app, &flows[app.index()], &out.residual) {
                self.grant(slot, app, f, &flows[app.index()][f], out);
                debug_assert_eq!(out.grants.last().map(|g| g.request), Some(req));
            }
        }
        self.active.retain(|&a| match &self.queues[a.index()] {
            Queue::Finite(q) => !q.is_empty(),
            Queue::Backlogged => true,
        });
        self.head = self.active.first().copied();
    }

    fn schedule_rounds(&mut self, slot: u64, flows: &[Vec<Flow>], out: &mut SlotSchedule) {
        let Some(head) = self.head else {
            return;
        };
        let start = self
            .active
            .iter()
            .position(|&a| a == head)
            .expect("head pointer references an active app");
        let order: Vec<AppId> = self.active[start..]
            .iter()
            .chain(&self.active[..start])
            .copied()
            .collect();

        let mut last_granted = None;
        loop {
            let mut granted = 0usize;
            let mut credited = false;
            for &app in &order {
                if !self.has_pending(app) {
                    continue;
                }
                let app_flows = &flows[app.index()];
                let n = match self.policy {
                    Policy::Rr => self.visit_counted(slot, app, app_flows, 1, out),
                    Policy::Wrr => {
                        let budget = self.weights[app.index()] as usize;
                        self.visit_counted(slot, app, app_flows, budget, out)
                    }
                    Policy::Drr => {
                        let (n, c) = self.visit_deficit(slot, app, app_flows, out);
                        credited |= c;
                        n
                    }
                    Policy::Fcfs => unreachable!(),
                };
                if n > 0 {
                    last_granted = Some(app);
                    granted += n;
                }
            }
            // a DRR pass may credit apps without granting when quanta are
            // smaller than the flow cost; keep going until they can pay
            if granted == 0 && !credited {
                break;
            }
        }

        let leaving = |s: &Self, a: AppId| !s.has_pending(a);
        if let Some(last) = last_granted {
            let pos = order.iter().position(|&a| a == last).unwrap();
            self.head = (1..=order.len())
                .map(|k| order[(pos + k) % order.len()])
                .find(|&a| !leaving(self, a));
        }
        let before = std::mem::take(&mut self.active);
        self.active = before.into_iter().filter(|&a| !leaving(self, a)).collect();
        if self.head.is_some_and(|h| !self.active.contains(&h)) {
            self.head = self.active.first().copied();
        }
    }

    fn visit_counted(&mut self, slot: u64, app: AppId, flows: &[Flow], budget: usize, out: &mut SlotSchedule) -> usize {
        let mut n = 0;
        while n < budget && self.has_pending(app) {
            let Some(f) = self.select_flow(app, flows, &out.residual) else {
                break;
            };
            self.grant(slot, app, f, &flows[f], out);
            n += 1;
        }
        n
    }

    /// Returns the number of grants and whether the app received its quantum.
    fn visit_deficit(&mut self, slot: u64, app: AppId, flows: &[Flow], out: &mut SlotSchedule) -> (usize, bool) {
        let i = app.index();
        let cap = self.deficit_cap(app);
        if self.peek_flow(app, flows, &out.residual).is_none() {
            // blocked by capacity: no credit this visit
            self.deficits[i] = self.deficits[i].min(cap);
            return (0, false);
        }
        self.deficits[i] += self.quantum(app);
        let mut n = 0;
        loop {
            if !self.has_pending(app) {
                self.deficits[i] = 0.0;
                break;
            }
            let Some(f) = self.peek_flow(app, flows, &out.residual) else {
                self.deficits[i] = self.deficits[i].min(cap);
                break;
            };
            let cost = f64::from(flows[f].cost);
            if self.deficits[i] < cost {
                break;
            }
            self.select_flow(app, flows, &out.residual);
            self.grant(slot, app, f, &flows[f], out);
            self.deficits[i] -= cost;
            n += 1;
        }
        (n, true)
    }
}
