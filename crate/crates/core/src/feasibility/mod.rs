//! Communication sets and steady-state constraint evaluation.
//!
//! For a processor `u`, `ch[u]` holds the intermediate results `u` receives
//! and `par[u]` the results it sends, each as `(operator, peer, application)`.
//! A result of one operator travelling between the same two processors for
//! several applications is sent once, at the largest throughput among them;
//! the tuple keeps that application (lowest index on ties). `down[u]` keeps
//! one `(object, source, application)` per application; the per-object max
//! over applications is taken when loads are computed.

mod placement;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use placement::{is_covered, resolve, MappingError, Placement};

use crate::model::{AppId, Instance, Mapping, ObjId, OpId, ProcId};
use crate::within;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CommTuple {
    pub op: OpId,
    pub peer: ProcId,
    pub app: AppId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DownTuple {
    pub object: ObjId,
    pub source: ProcId,
    pub app: AppId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommSets {
    pub ch: Vec<BTreeSet<CommTuple>>,
    pub par: Vec<BTreeSet<CommTuple>>,
    pub down: Vec<BTreeSet<DownTuple>>,
    /// Per processor: operator → rate it is computed at.
    pub ops: Vec<BTreeMap<OpId, f64>>,
    pub placement: Placement,
}

pub fn build_comm_sets(inst: &Instance, m: &Mapping) -> Result<CommSets, MappingError> {
    let placement = resolve(inst, m)?;
    Ok(comm_sets_from_placement(inst, placement, &m.downloads))
}

pub(crate) fn comm_sets_from_placement(
    inst: &Instance,
    placement: Placement,
    downloads: &BTreeMap<(ProcId, ObjId), ProcId>,
) -> CommSets {
    let p = inst.platform.len();
    let mut ops = vec![BTreeMap::<OpId, f64>::new(); p];
    // (receiver, op, sender) -> chosen app
    let mut flows: BTreeMap<(ProcId, OpId, ProcId), AppId> = BTreeMap::new();
    let mut down = vec![BTreeSet::new(); p];

    for (&n, &u) in &placement.proc_of {
        let op = inst.op(n);
        let rho = inst.rho(n.app);
        let slot = ops[u].entry(op.id).or_insert(rho);
        *slot = slot.max(rho);

        if let Some(parent) = n.parent() {
            let w = placement.get(parent);
            if w != u {
                flows
                    .entry((w, op.id, u))
                    .and_modify(|k| {
                        if rho > inst.rho(*k) || (rho == inst.rho(*k) && n.app < *k) {
                            *k = n.app;
                        }
                    })
                    .or_insert(n.app);
            }
        }
        for &j in &op.required_objects {
            if !inst.platform.holds(u, j) {
                if let Some(&v) = downloads.get(&(u, j)) {
                    down[u].insert(DownTuple { object: j, source: v, app: n.app });
                }
            }
        }
    }

    let mut ch = vec![BTreeSet::new(); p];
    let mut par = vec![BTreeSet::new(); p];
    for (&(dst, op, src), &app) in &flows {
        ch[dst].insert(CommTuple { op, peer: src, app });
        par[src].insert(CommTuple { op, peer: dst, app });
    }
    CommSets { ch, par, down, ops, placement }
}

impl CommSets {
    /// Per (processor, object): (source, max rate over applications).
    pub fn download_rates(&self, inst: &Instance) -> BTreeMap<(ProcId, ObjId), (ProcId, f64)> {
        let mut out: BTreeMap<(ProcId, ObjId), (ProcId, f64)> = BTreeMap::new();
        for (u, set) in self.down.iter().enumerate() {
            for t in set {
                let rate = inst.download_rate(t.object, t.app).unwrap_or(0.0);
                let e = out.entry((u, t.object)).or_insert((t.source, rate));
                e.1 = e.1.max(rate);
            }
        }
        out
    }

    /// Left-hand side of the compute constraint for `u`.
    pub fn compute_load(&self, inst: &Instance, u: ProcId) -> f64 {
        let speed = inst.platform.speed(u);
        if self.ops[u].is_empty() {
            return 0.0;
        }
        if speed <= 0.0 {
            return f64::INFINITY;
        }
        self.ops[u].iter().map(|(&p, &rate)| rate * inst.operators[p].comp / speed).fold(0.0, |a, x| a + x)
    }
}

/// Utilization of processor `u` by its operators, each counted once at the
/// largest rate required. `+inf` for a speed-0 processor that computes.
pub fn compute_load(inst: &Instance, m: &Mapping, u: ProcId) -> Result<f64, MappingError> {
    Ok(build_comm_sets(inst, m)?.compute_load(inst, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    Compute,
    Receive,
    Send,
    Nic,
    Link,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub constraint: Constraint,
    pub entity: String,
    pub load: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkLoad {
    pub u: ProcId,
    pub v: ProcId,
    pub load: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub compute_util: Vec<f64>,
    pub recv_util: Vec<f64>,
    pub send_util: Vec<f64>,
    pub nic_load: Vec<f64>,
    /// One entry per unordered pair `u < v`.
    pub link_load: Vec<LinkLoad>,
    pub violations: Vec<ConstraintViolation>,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn link(&self, u: ProcId, v: ProcId) -> &LinkLoad {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let p = self.compute_util.len();
        // Row-major upper triangle without diagonal.
        let idx = a * (2 * p - a - 1) / 2 + (b - a - 1);
        &self.link_load[idx]
    }
}

/// Evaluates every constraint family on a complete mapping.
pub fn check(inst: &Instance, m: &Mapping) -> Result<FeasibilityReport, MappingError> {
    let sets = build_comm_sets(inst, m)?;
    Ok(check_sets(inst, &sets))
}

pub fn check_sets(inst: &Instance, sets: &CommSets) -> FeasibilityReport {
    let pf = &inst.platform;
    let p = pf.len();
    let delta = |op: OpId| inst.operators[op].out_size;
    let rho = |k: AppId| inst.rho(k);

    let compute_util: Vec<f64> = (0..p).map(|u| sets.compute_load(inst, u)).collect();
    let recv_util: Vec<f64> = (0..p)
        .map(|u| sets.ch[u].iter().map(|t| rho(t.app) * delta(t.op) / pf.link(t.peer, u)).fold(0.0, |a, x| a + x))
        .collect();
    let send_util: Vec<f64> = (0..p)
        .map(|u| sets.par[u].iter().map(|t| rho(t.app) * delta(t.op) / pf.link(u, t.peer)).fold(0.0, |a, x| a + x))
        .collect();

    let dl = sets.download_rates(inst);
    let mut nic_load = vec![0.0; p];
    let mut pair = vec![0.0; p * p];
    for (&(u, _), &(v, rate)) in &dl {
        nic_load[u] += rate;
        nic_load[v] += rate;
        pair[u.min(v) * p + u.max(v)] += rate;
    }
    for u in 0..p {
        for t in &sets.ch[u] {
            let bw = rho(t.app) * delta(t.op);
            nic_load[u] += bw;
            pair[u.min(t.peer) * p + u.max(t.peer)] += bw;
        }
        for t in &sets.par[u] {
            nic_load[u] += rho(t.app) * delta(t.op);
        }
    }

    let mut violations = Vec::new();
    let mut flag = |constraint, entity: &dyn Fn() -> String, load: f64, capacity: f64| {
        if !within(load, capacity) {
            violations.push(ConstraintViolation { constraint, entity: entity(), load, capacity });
        }
    };
    for u in 0..p {
        flag(Constraint::Compute, &|| format!("P{u}"), compute_util[u], 1.0);
    }
    for u in 0..p {
        flag(Constraint::Receive, &|| format!("P{u}"), recv_util[u], 1.0);
    }
    for u in 0..p {
        flag(Constraint::Send, &|| format!("P{u}"), send_util[u], 1.0);
    }
    for u in 0..p {
        flag(Constraint::Nic, &|| format!("P{u}"), nic_load[u], pf.nic(u));
    }
    let mut link_load = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for u in 0..p {
        for v in u + 1..p {
            let load = pair[u * p + v];
            flag(Constraint::Link, &|| format!("P{u}-P{v}"), load, pf.link(u, v));
            link_load.push(LinkLoad { u, v, load, capacity: pf.link(u, v) });
        }
    }
    let feasible = violations.is_empty();
    FeasibilityReport { compute_util, recv_util, send_util, nic_load, link_load, violations, feasible }
}
