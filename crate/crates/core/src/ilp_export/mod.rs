//! Integer linear program for the mapping problem, written out in CPLEX LP
//! format, plus the way back: a 0/1 encoding of a mapping and a validator
//! that turns a solver assignment into a checked mapping.
//!
//! The program is linear as emitted. Per-operator and per-flow rates are
//! continuous variables bounded below by `rate * binary`, so the products of
//! binaries and rates never appear. Every feasible mapping encodes to an
//! assignment that satisfies every row, and every integral assignment that
//! satisfies the rows decodes to a mapping the checker accepts.

mod counts;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counts::{closed_form_counts, FamilyCounts};

use crate::feasibility::{build_comm_sets, check, FeasibilityReport, MappingError};
use crate::model::{AppId, Instance, Mapping, NodeIndex, NodeRef, ObjId, OpId, ProcId};
use crate::objectives::{evaluate, max_link_load};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IlpObjective {
    ProcPower,
    BwSum,
    BwMax,
    /// Enrolled-processor count; an extension beyond the three classical
    /// objectives of the program.
    ProcNb,
}

impl IlpObjective {
    pub fn name(self) -> &'static str {
        match self {
            IlpObjective::ProcPower => "proc-power",
            IlpObjective::BwSum => "bw-sum",
            IlpObjective::BwMax => "bw-max",
            IlpObjective::ProcNb => "proc-nb",
        }
    }
}

impl FromStr for IlpObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [IlpObjective::ProcPower, IlpObjective::BwSum, IlpObjective::BwMax, IlpObjective::ProcNb]
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown objective '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlpModel {
    pub objective: IlpObjective,
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
    pub obj_terms: Vec<(usize, f64)>,
    index: HashMap<String, usize>,
}

impl IlpModel {
    pub fn var_id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Number of variables per family (name prefix before the first `_`).
    pub fn var_counts(&self) -> BTreeMap<String, usize> {
        family_histogram(self.vars.iter().map(|v| v.name.as_str()))
    }

    /// Number of rows per family.
    pub fn row_counts(&self) -> BTreeMap<String, usize> {
        family_histogram(self.rows.iter().map(|r| r.name.as_str()))
    }

    /// Dense value vector from named values; absent names are 0.
    pub fn values(&self, a: &SolverAssignment) -> Result<Vec<f64>, IlpError> {
        let mut out = vec![0.0; self.vars.len()];
        for (name, &v) in &a.values {
            let id = self.var_id(name).ok_or_else(|| IlpError::UnknownVariable(name.clone()))?;
            out[id] = v;
        }
        Ok(out)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.obj_terms.iter().map(|&(i, c)| c * values[i]).sum()
    }

    /// Names of rows and bounds the values violate, within a relative
    /// tolerance of 1e-9.
    pub fn violations(&self, values: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            let tol = 1e-9 * x.abs().max(1.0);
            if x < v.lb - tol || x > v.ub + tol {
                out.push(format!("bound {}", v.name));
            }
        }
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|&(i, c)| c * values[i]).sum();
            let scale = r.terms.iter().map(|&(i, c)| (c * values[i]).abs()).sum::<f64>().max(r.rhs.abs()).max(1.0);
            let tol = 1e-9 * scale;
            let ok = match r.sense {
                Sense::Le => lhs <= r.rhs + tol,
                Sense::Ge => lhs >= r.rhs - tol,
                Sense::Eq => (lhs - r.rhs).abs() <= tol,
            };
            if !ok {
                out.push(r.name.clone());
            }
        }
        out
    }
}

fn family_histogram<'a>(names: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for n in names {
        let fam = n.split('_').next().unwrap_or(n);
        *out.entry(fam.to_string()).or_insert(0) += 1;
    }
    out
}

/// Per-application index sets the program ranges over.
pub(crate) struct Dims {
    pub p: usize,
    pub nodes: Vec<Vec<NodeIndex>>,
    /// (parent, child) node pairs.
    pub edges: Vec<Vec<(NodeIndex, NodeIndex)>>,
    pub ops: Vec<BTreeSet<OpId>>,
    /// (parent operator, child operator) pairs occurring on some edge.
    pub op_edges: Vec<BTreeSet<(OpId, OpId)>>,
    pub child_ops: Vec<BTreeSet<OpId>>,
    pub objs: Vec<BTreeSet<ObjId>>,
    pub all_ops: BTreeSet<OpId>,
    pub all_child_ops: BTreeSet<OpId>,
    pub all_objs: BTreeSet<ObjId>,
}

impl Dims {
    pub fn new(inst: &Instance) -> Dims {
        let mut d = Dims {
            p: inst.platform.len(),
            nodes: Vec::new(),
            edges: Vec::new(),
            ops: Vec::new(),
            op_edges: Vec::new(),
            child_ops: Vec::new(),
            objs: Vec::new(),
            all_ops: BTreeSet::new(),
            all_child_ops: BTreeSet::new(),
            all_objs: BTreeSet::new(),
        };
        for (k, app) in inst.apps.iter().enumerate() {
            let nodes: Vec<NodeIndex> = app.nodes.keys().copied().collect();
            let op = |i: NodeIndex| inst.op_id(NodeRef::new(k, i));
            let edges: Vec<(NodeIndex, NodeIndex)> =
                nodes.iter().filter(|&&c| c > 1).map(|&c| (c / 2, c)).collect();
            let ops: BTreeSet<OpId> = nodes.iter().map(|&i| op(i)).collect();
            let op_edges: BTreeSet<(OpId, OpId)> = edges.iter().map(|&(a, c)| (op(a), op(c))).collect();
            let child_ops: BTreeSet<OpId> = op_edges.iter().map(|&(_, q)| q).collect();
            let objs: BTreeSet<ObjId> = nodes
                .iter()
                .flat_map(|&i| inst.operators[op(i)].required_objects.iter().copied())
                .collect();
            d.all_ops.extend(&ops);
            d.all_child_ops.extend(&child_ops);
            d.all_objs.extend(&objs);
            d.nodes.push(nodes);
            d.edges.push(edges);
            d.ops.push(ops);
            d.op_edges.push(op_edges);
            d.child_ops.push(child_ops);
            d.objs.push(objs);
        }
        d
    }
}

fn x(k: AppId, i: NodeIndex, u: ProcId) -> String {
    format!("x_{k}_{i}_{u}")
}
fn d(j: ObjId, u: ProcId, v: ProcId, k: AppId) -> String {
    format!("d_{j}_{u}_{v}_{k}")
}
fn src(j: ObjId, u: ProcId, v: ProcId) -> String {
    format!("src_{j}_{u}_{v}")
}
fn y(k: AppId, i: NodeIndex, u: ProcId, c: NodeIndex, w: ProcId) -> String {
    format!("y_{k}_{i}_{u}_{c}_{w}")
}
fn used(u: ProcId) -> String {
    format!("used_{u}")
}
fn xop(k: AppId, p: OpId, u: ProcId) -> String {
    format!("xop_{k}_{p}_{u}")
}
fn yop(k: AppId, p: OpId, u: ProcId, q: OpId, w: ProcId) -> String {
    format!("yop_{k}_{p}_{u}_{q}_{w}")
}
fn ch(u: ProcId, q: OpId, v: ProcId, k: AppId) -> String {
    format!("ch_{u}_{q}_{v}_{k}")
}
fn par(u: ProcId, q: OpId, v: ProcId, k: AppId) -> String {
    format!("par_{u}_{q}_{v}_{k}")
}
fn rho(u: ProcId, p: OpId) -> String {
    format!("rho_{u}_{p}")
}
/// Rate of the result of `q` sent from `v` to `u`.
fn fr(q: OpId, v: ProcId, u: ProcId) -> String {
    format!("fr_{q}_{v}_{u}")
}
fn ratemax(j: ObjId, u: ProcId, v: ProcId) -> String {
    format!("ratemax_{j}_{u}_{v}")
}
const BWMAX: &str = "bwmax";

struct Builder {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
    rows: Vec<Row>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) {
        debug_assert!(!self.index.contains_key(&name), "duplicate variable {name}");
        self.index.insert(name.clone(), self.vars.len());
        self.vars.push(Var { name, kind, lb, ub });
    }

    fn bin(&mut self, name: String) {
        self.var(name, VarKind::Binary, 0.0, 1.0);
    }

    fn id(&self, name: &str) -> usize {
        self.index[name]
    }

    /// Terms given by name; empty rows are dropped.
    fn row(&mut self, name: String, terms: Vec<(String, f64)>, sense: Sense, rhs: f64) {
        if terms.is_empty() {
            return;
        }
        let terms = terms.into_iter().map(|(n, c)| (self.id(&n), c)).collect();
        self.rows.push(Row { name, terms, sense, rhs });
    }
}

/// Terms of the traffic on the link between `u` and `v`, both directions.
fn link_terms(inst: &Instance, dm: &Dims, u: ProcId, v: ProcId) -> Vec<(String, f64)> {
    let mut t = Vec::new();
    for &j in &dm.all_objs {
        t.push((ratemax(j, u, v), 1.0));
        t.push((ratemax(j, v, u), 1.0));
    }
    for &q in &dm.all_child_ops {
        let delta = inst.operators[q].out_size;
        t.push((fr(q, u, v), delta));
        t.push((fr(q, v, u), delta));
    }
    t
}

pub fn build_model(inst: &Instance, objective: IlpObjective) -> IlpModel {
    let dm = Dims::new(inst);
    let pf = &inst.platform;
    let p = dm.p;
    let procs = || 0..p;
    let pairs = move || (0..p).flat_map(move |u| (0..p).filter(move |&v| v != u).map(move |v| (u, v)));
    let rho_k = |k: AppId| inst.rho(k);
    let rho_hi = (0..inst.apps.len()).map(rho_k).fold(0.0, f64::max);
    let rate = |j: ObjId, k: AppId| inst.download_rate(j, k).unwrap_or(0.0);
    let op_of = |k: AppId, i: NodeIndex| inst.op_id(NodeRef::new(k, i));

    let mut b = Builder { vars: Vec::new(), index: HashMap::new(), rows: Vec::new() };

    // Variables.
    for (k, nodes) in dm.nodes.iter().enumerate() {
        for &i in nodes {
            for u in procs() {
                let ub = if pf.speed(u) > 0.0 { 1.0 } else { 0.0 };
                b.var(x(k, i, u), VarKind::Binary, 0.0, ub);
            }
        }
    }
    for (k, objs) in dm.objs.iter().enumerate() {
        for &j in objs {
            for u in procs() {
                for v in procs() {
                    b.bin(d(j, u, v, k));
                }
            }
        }
    }
    for &j in &dm.all_objs {
        for u in procs() {
            for v in procs() {
                b.bin(src(j, u, v));
            }
        }
    }
    for (k, edges) in dm.edges.iter().enumerate() {
        for &(i, c) in edges {
            for u in procs() {
                for w in procs() {
                    b.bin(y(k, i, u, c, w));
                }
            }
        }
    }
    for u in procs() {
        b.bin(used(u));
    }
    for (k, ops) in dm.ops.iter().enumerate() {
        for &q in ops {
            for u in procs() {
                b.bin(xop(k, q, u));
            }
        }
    }
    for (k, oe) in dm.op_edges.iter().enumerate() {
        for &(a, q) in oe {
            for u in procs() {
                for w in procs() {
                    b.bin(yop(k, a, u, q, w));
                }
            }
        }
    }
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            for (u, v) in pairs() {
                b.bin(ch(u, q, v, k));
            }
        }
    }
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            for (u, v) in pairs() {
                b.bin(par(u, q, v, k));
            }
        }
    }
    for u in procs() {
        for &q in &dm.all_ops {
            b.var(rho(u, q), VarKind::Continuous, 0.0, rho_hi);
        }
    }
    for &q in &dm.all_child_ops {
        for (v, u) in pairs() {
            let ub = if pf.link(v, u) > 0.0 { rho_hi } else { 0.0 };
            b.var(fr(q, v, u), VarKind::Continuous, 0.0, ub);
        }
    }
    for &j in &dm.all_objs {
        let hi = (0..inst.apps.len()).filter(|&k| dm.objs[k].contains(&j)).map(|k| rate(j, k)).fold(0.0, f64::max);
        for (u, v) in pairs() {
            b.var(ratemax(j, u, v), VarKind::Continuous, 0.0, hi);
        }
    }
    if objective == IlpObjective::BwMax {
        b.var(BWMAX.into(), VarKind::Continuous, 0.0, f64::INFINITY);
    }

    // Placement and downloads.
    for (k, nodes) in dm.nodes.iter().enumerate() {
        for &i in nodes {
            let t = procs().map(|u| (x(k, i, u), 1.0)).collect();
            b.row(format!("place_{k}_{i}"), t, Sense::Eq, 1.0);
        }
    }
    for (k, objs) in dm.objs.iter().enumerate() {
        for &j in objs {
            for u in procs() {
                for v in procs() {
                    let holds = if pf.holds(v, j) { 1.0 } else { 0.0 };
                    b.row(format!("avail_{j}_{u}_{v}_{k}"), vec![(d(j, u, v, k), 1.0)], Sense::Le, holds);
                }
            }
        }
    }
    for (k, objs) in dm.objs.iter().enumerate() {
        for &j in objs {
            for u in procs() {
                for v in procs() {
                    let t = vec![(d(j, u, v, k), 1.0), (src(j, u, v), -1.0)];
                    b.row(format!("dsrc_{j}_{u}_{v}_{k}"), t, Sense::Le, 0.0);
                }
            }
        }
    }
    for &j in &dm.all_objs {
        for u in procs() {
            let t = procs().map(|v| (src(j, u, v), 1.0)).collect();
            b.row(format!("onesrc_{j}_{u}"), t, Sense::Le, 1.0);
        }
    }
    for (k, objs) in dm.objs.iter().enumerate() {
        for &j in objs {
            for u in procs() {
                let t = procs().map(|v| (d(j, u, v, k), 1.0)).collect();
                b.row(format!("dmax_{j}_{u}_{k}"), t, Sense::Le, 1.0);
            }
        }
    }
    for (k, nodes) in dm.nodes.iter().enumerate() {
        for &i in nodes {
            for &j in &inst.operators[op_of(k, i)].required_objects {
                for u in procs() {
                    let mut t: Vec<(String, f64)> = procs().map(|v| (d(j, u, v, k), 1.0)).collect();
                    t.push((x(k, i, u), -1.0));
                    b.row(format!("cover_{k}_{i}_{j}_{u}"), t, Sense::Ge, 0.0);
                }
            }
        }
    }

    // Edge indicators.
    for (k, edges) in dm.edges.iter().enumerate() {
        for &(i, c) in edges {
            for u in procs() {
                for w in procs() {
                    let yv = y(k, i, u, c, w);
                    let tag = format!("{k}_{i}_{u}_{c}_{w}");
                    b.row(format!("ypar_{tag}"), vec![(yv.clone(), 1.0), (x(k, i, u), -1.0)], Sense::Le, 0.0);
                    b.row(format!("ychd_{tag}"), vec![(yv.clone(), 1.0), (x(k, c, w), -1.0)], Sense::Le, 0.0);
                    b.row(
                        format!("ylo_{tag}"),
                        vec![(yv, 1.0), (x(k, i, u), -1.0), (x(k, c, w), -1.0)],
                        Sense::Ge,
                        -1.0,
                    );
                }
            }
        }
    }

    // Enrolled processors.
    for u in procs() {
        let mut t = vec![(used(u), 1.0)];
        for (k, nodes) in dm.nodes.iter().enumerate() {
            t.extend(nodes.iter().map(|&i| (x(k, i, u), -1.0)));
        }
        if t.len() > 1 {
            b.row(format!("usedlo_{u}"), t, Sense::Le, 0.0);
        }
    }
    for (k, nodes) in dm.nodes.iter().enumerate() {
        for &i in nodes {
            for u in procs() {
                b.row(format!("usedhi_{k}_{i}_{u}"), vec![(used(u), 1.0), (x(k, i, u), -1.0)], Sense::Ge, 0.0);
            }
        }
    }

    // Operator-level placement and edges.
    for (k, nodes) in dm.nodes.iter().enumerate() {
        for &i in nodes {
            for u in procs() {
                let t = vec![(xop(k, op_of(k, i), u), 1.0), (x(k, i, u), -1.0)];
                b.row(format!("xophi_{k}_{i}_{u}"), t, Sense::Ge, 0.0);
            }
        }
    }
    for (k, ops) in dm.ops.iter().enumerate() {
        for &q in ops {
            for u in procs() {
                let mut t = vec![(xop(k, q, u), 1.0)];
                t.extend(dm.nodes[k].iter().filter(|&&i| op_of(k, i) == q).map(|&i| (x(k, i, u), -1.0)));
                b.row(format!("xoplo_{k}_{q}_{u}"), t, Sense::Le, 0.0);
            }
        }
    }
    for (k, edges) in dm.edges.iter().enumerate() {
        for &(i, c) in edges {
            for u in procs() {
                for w in procs() {
                    let t = vec![(yop(k, op_of(k, i), u, op_of(k, c), w), 1.0), (y(k, i, u, c, w), -1.0)];
                    b.row(format!("yophi_{k}_{i}_{u}_{c}_{w}"), t, Sense::Ge, 0.0);
                }
            }
        }
    }
    for (k, oe) in dm.op_edges.iter().enumerate() {
        for &(a, q) in oe {
            for u in procs() {
                for w in procs() {
                    let mut t = vec![(yop(k, a, u, q, w), 1.0)];
                    for &(i, c) in &dm.edges[k] {
                        if op_of(k, i) == a && op_of(k, c) == q {
                            t.push((y(k, i, u, c, w), -1.0));
                        }
                    }
                    b.row(format!("yoplo_{k}_{a}_{u}_{q}_{w}"), t, Sense::Le, 0.0);
                }
            }
        }
    }

    // Results received (ch) and sent (par) across processors.
    let parents_of = |k: AppId, q: OpId| -> Vec<OpId> {
        dm.op_edges[k].iter().filter(|&&(_, c)| c == q).map(|&(a, _)| a).collect()
    };
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            let parents = parents_of(k, q);
            for (u, v) in pairs() {
                let cv = ch(u, q, v, k);
                let mut t = vec![(cv.clone(), 1.0)];
                t.extend(parents.iter().map(|&a| (yop(k, a, u, q, v), -1.0)));
                b.row(format!("chlo_{u}_{q}_{v}_{k}"), t, Sense::Le, 0.0);
                for &a in &parents {
                    let t = vec![(cv.clone(), 1.0), (yop(k, a, u, q, v), -1.0)];
                    b.row(format!("chhi_{u}_{q}_{v}_{k}_{a}"), t, Sense::Ge, 0.0);
                }
            }
        }
    }
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            let parents = parents_of(k, q);
            for (u, v) in pairs() {
                let pv = par(u, q, v, k);
                let mut t = vec![(pv.clone(), 1.0)];
                t.extend(parents.iter().map(|&a| (yop(k, a, v, q, u), -1.0)));
                b.row(format!("parlo_{u}_{q}_{v}_{k}"), t, Sense::Le, 0.0);
                for &a in &parents {
                    let t = vec![(pv.clone(), 1.0), (yop(k, a, v, q, u), -1.0)];
                    b.row(format!("parhi_{u}_{q}_{v}_{k}_{a}"), t, Sense::Ge, 0.0);
                }
            }
        }
    }

    // Rates: each operator, flow and download at the largest rate required.
    for (k, ops) in dm.ops.iter().enumerate() {
        for &q in ops {
            for u in procs() {
                let t = vec![(rho(u, q), 1.0), (xop(k, q, u), -rho_k(k))];
                b.row(format!("thr_{k}_{q}_{u}"), t, Sense::Ge, 0.0);
            }
        }
    }
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            for (v, u) in pairs() {
                let t = vec![(fr(q, v, u), 1.0), (ch(u, q, v, k), -rho_k(k))];
                b.row(format!("frch_{q}_{v}_{u}_{k}"), t, Sense::Ge, 0.0);
            }
        }
    }
    for (k, cops) in dm.child_ops.iter().enumerate() {
        for &q in cops {
            for (v, u) in pairs() {
                let t = vec![(fr(q, v, u), 1.0), (par(v, q, u, k), -rho_k(k))];
                b.row(format!("frpar_{q}_{v}_{u}_{k}"), t, Sense::Ge, 0.0);
            }
        }
    }
    for (k, objs) in dm.objs.iter().enumerate() {
        for &j in objs {
            for (u, v) in pairs() {
                let t = vec![(ratemax(j, u, v), 1.0), (d(j, u, v, k), -rate(j, k))];
                b.row(format!("rate_{j}_{u}_{v}_{k}"), t, Sense::Ge, 0.0);
            }
        }
    }

    // Capacities. The compute row is multiplied through by the speed.
    for u in procs() {
        let t = dm.all_ops.iter().map(|&q| (rho(u, q), inst.operators[q].comp)).collect();
        b.row(format!("comp_{u}"), t, Sense::Le, pf.speed(u));
    }
    for u in procs() {
        let mut t = Vec::new();
        for &q in &dm.all_child_ops {
            for v in procs().filter(|&v| v != u && pf.link(v, u) > 0.0) {
                t.push((fr(q, v, u), inst.operators[q].out_size / pf.link(v, u)));
            }
        }
        b.row(format!("recv_{u}"), t, Sense::Le, 1.0);
    }
    for u in procs() {
        let mut t = Vec::new();
        for &q in &dm.all_child_ops {
            for v in procs().filter(|&v| v != u && pf.link(u, v) > 0.0) {
                t.push((fr(q, u, v), inst.operators[q].out_size / pf.link(u, v)));
            }
        }
        b.row(format!("send_{u}"), t, Sense::Le, 1.0);
    }
    for u in procs() {
        let mut t = Vec::new();
        for v in procs().filter(|&v| v != u) {
            for &j in &dm.all_objs {
                t.push((ratemax(j, u, v), 1.0));
                t.push((ratemax(j, v, u), 1.0));
            }
        }
        for v in procs().filter(|&v| v != u) {
            for &q in &dm.all_child_ops {
                let delta = inst.operators[q].out_size;
                t.push((fr(q, v, u), delta));
                t.push((fr(q, u, v), delta));
            }
        }
        b.row(format!("nic_{u}"), t, Sense::Le, pf.nic(u));
    }
    for u in procs() {
        for v in u + 1..p {
            b.row(format!("link_{u}_{v}"), link_terms(inst, &dm, u, v), Sense::Le, pf.link(u, v));
        }
    }
    if objective == IlpObjective::BwMax {
        for u in procs() {
            for v in u + 1..p {
                let mut t = link_terms(inst, &dm, u, v);
                if !t.is_empty() {
                    for term in &mut t {
                        term.1 = -term.1;
                    }
                    t.insert(0, (BWMAX.to_string(), 1.0));
                }
                b.row(format!("bwmax_{u}_{v}"), t, Sense::Ge, 0.0);
            }
        }
    }

    let obj_names: Vec<(String, f64)> = match objective {
        IlpObjective::ProcPower => procs()
            .filter(|&u| pf.speed(u) > 0.0)
            .flat_map(|u| dm.all_ops.iter().map(move |&q| (u, q)))
            .map(|(u, q)| (rho(u, q), inst.operators[q].comp / pf.speed(u)))
            .collect(),
        IlpObjective::BwSum => {
            let mut t = Vec::new();
            for (u, v) in pairs() {
                t.extend(dm.all_objs.iter().map(|&j| (ratemax(j, u, v), 1.0)));
            }
            for &q in &dm.all_child_ops {
                for (v, u) in pairs() {
                    t.push((fr(q, v, u), inst.operators[q].out_size));
                }
            }
            t
        }
        IlpObjective::BwMax => vec![(BWMAX.to_string(), 1.0)],
        IlpObjective::ProcNb => procs().map(|u| (used(u), 1.0)).collect(),
    };
    let obj_terms = obj_names.into_iter().map(|(n, c)| (b.id(&n), c)).collect();
    IlpModel { objective, vars: b.vars, rows: b.rows, obj_terms, index: b.index }
}

/// Shortest round-trip decimal; integral values without a fraction.
fn num(c: f64) -> String {
    if c.is_infinite() {
        return if c > 0.0 { "+inf".into() } else { "-inf".into() };
    }
    format!("{c}")
}

const MAX_LINE: usize = 200;

/// Appends `pieces` after `head`, wrapping before `MAX_LINE`.
fn wrapped(out: &mut String, head: &str, pieces: &[String]) {
    let mut line = head.to_string();
    for piece in pieces {
        if line.len() + 1 + piece.len() > MAX_LINE && !line.trim().is_empty() {
            out.push_str(&line);
            out.push('\n');
            line = String::from("   ");
        }
        if !line.ends_with(' ') {
            line.push(' ');
        }
        line.push_str(piece);
    }
    out.push_str(&line);
    out.push('\n');
}

fn expr(model: &IlpModel, terms: &[(usize, f64)]) -> Vec<String> {
    terms
        .iter()
        .enumerate()
        .map(|(n, &(i, c))| {
            let name = &model.vars[i].name;
            let sign = if c < 0.0 { "-" } else { "+" };
            let mag = c.abs();
            let body = if mag == 1.0 { name.clone() } else { format!("{} {name}", num(mag)) };
            if n == 0 && sign == "+" {
                body
            } else {
                format!("{sign} {body}")
            }
        })
        .collect()
}

/// CPLEX LP text. Identical models give byte-identical output.
pub fn emit_lp(model: &IlpModel) -> String {
    let mut out = String::new();
    writeln!(out, "\\ operator mapping, objective {}", model.objective.name()).unwrap();
    out.push_str("Minimize\n");
    if model.obj_terms.is_empty() {
        out.push_str(" obj: 0\n");
    } else {
        wrapped(&mut out, " obj:", &expr(model, &model.obj_terms));
    }
    out.push_str("Subject To\n");
    for r in &model.rows {
        let mut pieces = expr(model, &r.terms);
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        pieces.push(format!("{op} {}", num(r.rhs)));
        wrapped(&mut out, &format!(" {}:", r.name), &pieces);
    }
    let bounded: Vec<&Var> = model
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Continuous || v.ub != 1.0 || v.lb != 0.0)
        .collect();
    if !bounded.is_empty() {
        out.push_str("Bounds\n");
        for v in bounded {
            if v.lb == v.ub {
                writeln!(out, " {} = {}", v.name, num(v.lb)).unwrap();
            } else {
                writeln!(out, " {} <= {} <= {}", num(v.lb), v.name, num(v.ub)).unwrap();
            }
        }
    }
    let bins: Vec<String> = model.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.clone()).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            writeln!(out, " {}", chunk.join(" ")).unwrap();
        }
    }
    out.push_str("End\n");
    out
}

/// Named variable values as returned by a solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverAssignment {
    pub values: BTreeMap<String, f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum IlpError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("binary {name} has fractional value {value}")]
    FractionalBinary { name: String, value: f64 },
    #[error("node {node} is placed on {count} processors")]
    Placement { node: NodeRef, count: usize },
    #[error("no download source for object {object} at P{proc}")]
    MissingSource { proc: ProcId, object: ObjId },
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// The 0/1 assignment induced by a mapping, with every rate variable at the
/// smallest value its rows allow.
pub fn encode_mapping(inst: &Instance, model: &IlpModel, m: &Mapping) -> Result<SolverAssignment, IlpError> {
    let sets = build_comm_sets(inst, m)?;
    let pl = &sets.placement;
    let pf = &inst.platform;
    let mut val: BTreeMap<String, f64> = BTreeMap::new();
    let mut raise = |name: String, v: f64| {
        let e = val.entry(name).or_insert(0.0);
        *e = e.max(v);
    };
    for n in inst.nodes() {
        let (k, i, u) = (n.app, n.node, pl.get(n));
        let q = inst.op_id(n);
        let r = inst.rho(k);
        raise(x(k, i, u), 1.0);
        raise(used(u), 1.0);
        raise(xop(k, q, u), 1.0);
        raise(rho(u, q), r);
        if let Some(parent) = n.parent() {
            let (a, w) = (inst.op_id(parent), pl.get(parent));
            raise(y(k, parent.node, w, i, u), 1.0);
            raise(yop(k, a, w, q, u), 1.0);
            if w != u {
                raise(ch(w, q, u, k), 1.0);
                raise(par(u, q, w, k), 1.0);
                raise(fr(q, u, w), r);
            }
        }
        for &j in &inst.operators[q].required_objects {
            let v = if pf.holds(u, j) {
                u
            } else {
                *m.downloads.get(&(u, j)).ok_or(IlpError::MissingSource { proc: u, object: j })?
            };
            raise(d(j, u, v, k), 1.0);
            raise(src(j, u, v), 1.0);
            if v != u {
                raise(ratemax(j, u, v), inst.download_rate(j, k).unwrap_or(0.0));
            }
        }
    }
    if model.objective == IlpObjective::BwMax {
        raise(BWMAX.into(), max_link_load(inst, &sets));
    }
    let mut a = SolverAssignment { values: val, objective: None };
    let values = model.values(&a)?;
    a.objective = Some(model.objective_value(&values));
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCheck {
    pub mapping: Mapping,
    pub report: FeasibilityReport,
    /// Objective recomputed from the decoded mapping.
    pub recomputed: f64,
    /// Relative gap to the solver's objective when above 1e-6.
    pub objective_discrepancy: Option<f64>,
}

/// Decodes placements and download sources, then re-checks the mapping.
pub fn validate_solution(
    inst: &Instance,
    objective: IlpObjective,
    a: &SolverAssignment,
) -> Result<SolutionCheck, IlpError> {
    let model = build_model(inst, objective);
    let values = model.values(a)?;
    for (v, &val) in model.vars.iter().zip(&values) {
        if v.kind == VarKind::Binary && val.min((val - 1.0).abs()) > 1e-6 {
            return Err(IlpError::FractionalBinary { name: v.name.clone(), value: val });
        }
    }
    let on = |name: String| model.var_id(&name).is_some_and(|id| values[id] > 0.5);
    let p = inst.platform.len();
    let mut m = Mapping::default();
    for n in inst.nodes() {
        let hosts: Vec<ProcId> = (0..p).filter(|&u| on(x(n.app, n.node, u))).collect();
        if hosts.len() != 1 {
            return Err(IlpError::Placement { node: n, count: hosts.len() });
        }
        m.assign.insert(n, hosts[0]);
    }
    for n in inst.nodes() {
        let u = m.assign[&n];
        for &j in &inst.op(n).required_objects {
            if inst.platform.holds(u, j) || m.downloads.contains_key(&(u, j)) {
                continue;
            }
            let v = (0..p)
                .filter(|&v| v != u)
                .find(|&v| on(src(j, u, v)))
                .or_else(|| (0..p).filter(|&v| v != u).find(|&v| on(d(j, u, v, n.app))))
                .ok_or(IlpError::MissingSource { proc: u, object: j })?;
            m.downloads.insert((u, j), v);
        }
    }
    let report = check(inst, &m)?;
    let sets = build_comm_sets(inst, &m)?;
    let cost = evaluate(inst, &m, &sets);
    let recomputed = match objective {
        IlpObjective::ProcPower => cost.proc_power,
        IlpObjective::BwSum => cost.bw_sum,
        IlpObjective::BwMax => max_link_load(inst, &sets),
        IlpObjective::ProcNb => cost.proc_nb as f64,
    };
    let objective_discrepancy = a.objective.and_then(|z| {
        let gap = (z - recomputed).abs() / recomputed.abs().max(1.0);
        (gap > 1e-6).then_some(gap)
    });
    Ok(SolutionCheck { mapping: m, report, recomputed, objective_discrepancy })
}
