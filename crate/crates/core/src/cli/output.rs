//! CSV rendering. Column order is fixed; floats use 6 significant digits.

use std::fmt::Write as _;

use crate::engine::{Metrics, SlotLedger};
use crate::model::AppId;
use crate::routing::Flow;

pub const PER_APP_HEADER: [&str; 9] = [
    "app_id",
    "policy",
    "seed",
    "slots",
    "grants",
    "delivered",
    "rate_per_slot",
    "weighted_rate",
    "mean_latency_slots",
];

pub const TRACE_HEADER: [&str; 7] = ["slot", "kind", "id", "capacity", "residual", "grants", "successes"];

pub const NA: &str = "NA";

/// Formats `x` with 6 significant digits, choosing fixed or exponent notation
/// the way C's `%.6g` does and dropping trailing zeros. The exponent is not
/// zero-padded (`1e-5`, not `1e-05`). Ties round to even.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return NA.into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_num)
}

pub fn global_header(edges: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "jain_weighted".into(), "total_delivered".into()];
    h.extend((0..edges).map(|e| format!("edge_{e}_util")));
    h
}

pub fn per_app_rows(m: &Metrics) -> Vec<Vec<String>> {
    m.apps
        .iter()
        .map(|a| {
            let id = a.app;
            vec![
                id.to_string(),
                m.policy.to_string(),
                m.seed.to_string(),
                m.slots.to_string(),
                a.grants.to_string(),
                a.delivered.to_string(),
                fmt_num(m.rate_per_slot(id)),
                fmt_num(m.weighted_rate(id)),
                opt(m.mean_latency(id)),
            ]
        })
        .collect()
}

pub fn global_row(m: &Metrics) -> Vec<String> {
    let mut row = vec![
        m.seed.to_string(),
        opt(m.jain_weighted()),
        m.total_delivered().to_string(),
    ];
    row.extend(m.utilization().into_iter().map(fmt_num));
    row
}

pub fn trace_rows(flows: &[Vec<Flow>], ledger: &SlotLedger) -> Vec<Vec<String>> {
    let slot = ledger.slot.to_string();
    let mut rows = Vec::new();
    for (e, ((cap, res), g)) in ledger
        .sampled
        .iter()
        .zip(&ledger.residual)
        .zip(&ledger.edge_grants)
        .enumerate()
    {
        rows.push(vec![
            slot.clone(),
            "edge".into(),
            e.to_string(),
            cap.to_string(),
            res.to_string(),
            g.to_string(),
            NA.into(),
        ]);
    }
    for f in &ledger.flows {
        let worker = flows[f.app.index()][f.flow].worker;
        rows.push(vec![
            slot.clone(),
            "flow".into(),
            flow_label(f.app, worker.index()),
            NA.into(),
            NA.into(),
            f.grants.to_string(),
            f.successes.to_string(),
        ]);
    }
    rows
}

/// `app<a>-w<worker>`, the identifier of a flow in traces.
pub fn flow_label(app: AppId, worker: usize) -> String {
    format!("app{app}-w{worker}")
}

/// Renders a header and rows as CSV text.
pub fn to_csv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header.iter().map(AsRef::as_ref))
        .expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Human-readable `mean ± sd` line fragment.
pub fn mean_sd(mean: f64, sd: f64, n: usize) -> String {
    let mut s = fmt_num(mean);
    if n > 1 {
        let _ = write!(s, " ± {}", fmt_num(sd));
    }
    s
}
