//! Incremental constraint bookkeeping for the heuristics.
//!
//! Loads are kept as bags: for every deduplicated quantity (an operator
//! computed on a processor, a result sent between two processors, an object
//! downloaded from a source) the bag holds one `(rate, app)` entry per node
//! that requires it, and only the bag maximum is charged. Removing a node
//! therefore lowers a load only when it held the maximum.
//!
//! Every node is `Assigned`, a reuse `Consumer`, `Covered` (strict
//! descendant of a consumer, pointing at its counterpart under the producer)
//! or absent. Resolved nodes carry the processor where their result exists.
//! A covered node whose counterpart is not yet resolved waits as its twin and
//! is resolved together with it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::*;

/// Builder acceptance slack; stricter than the checker's.
const BUILD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum BagKey {
    Compute { u: ProcId, op: OpId },
    Flow { op: OpId, src: ProcId, dst: ProcId },
    Download { u: ProcId, obj: ObjId, src: ProcId },
}

/// One constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Row {
    Compute(ProcId),
    Receive(ProcId),
    Send(ProcId),
    Nic(ProcId),
    Link(ProcId, ProcId),
}

impl std::fmt::Display for Row {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Row::Compute(u) => write!(f, "compute capacity of P{u}"),
            Row::Receive(u) => write!(f, "receive share of P{u}"),
            Row::Send(u) => write!(f, "send share of P{u}"),
            Row::Nic(u) => write!(f, "network card of P{u}"),
            Row::Link(u, v) => write!(f, "link P{u}-P{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Status {
    Assigned(ProcId),
    Consumer(NodeRef),
    Covered(NodeRef),
}

type Bag = BTreeMap<NodeRef, (f64, AppId)>;

fn bag_max(bag: &Bag) -> Option<f64> {
    bag.values().map(|&(r, _)| r).reduce(f64::max)
}

#[derive(Default)]
pub(crate) struct Txn {
    removed: BTreeSet<NodeRef>,
    status: Vec<(NodeRef, Option<Status>)>,
    twin_add: Vec<(NodeRef, NodeRef)>,
    twin_del: Vec<(NodeRef, NodeRef)>,
    resolved: BTreeMap<NodeRef, ProcId>,
    adds: Vec<(BagKey, NodeRef, f64, AppId)>,
    sources: BTreeMap<(ProcId, ObjId), ProcId>,
}

pub(crate) struct Eval {
    bags: Vec<(BagKey, Bag)>,
    rows: BTreeMap<Row, BTreeMap<BagKey, Option<f64>>>,
    /// Change of the summed link loads.
    pub footprint: f64,
}

pub(crate) struct State<'a> {
    pub inst: &'a Instance,
    status: BTreeMap<NodeRef, Status>,
    proc_of: BTreeMap<NodeRef, ProcId>,
    twins: BTreeMap<NodeRef, BTreeSet<NodeRef>>,
    registry: BTreeMap<OpId, BTreeSet<NodeRef>>,
    consumers: BTreeMap<NodeRef, usize>,
    bags: BTreeMap<BagKey, Bag>,
    owned: BTreeMap<NodeRef, BTreeSet<BagKey>>,
    rows: BTreeMap<Row, BTreeMap<BagKey, f64>>,
    row_sum: BTreeMap<Row, f64>,
    down_src: BTreeMap<(ProcId, ObjId), ProcId>,
    pub chosen: BTreeSet<ProcId>,
    pub last_rejection: Option<Row>,
}

impl<'a> State<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        State {
            inst,
            status: BTreeMap::new(),
            proc_of: BTreeMap::new(),
            twins: BTreeMap::new(),
            registry: BTreeMap::new(),
            consumers: BTreeMap::new(),
            bags: BTreeMap::new(),
            owned: BTreeMap::new(),
            rows: BTreeMap::new(),
            row_sum: BTreeMap::new(),
            down_src: BTreeMap::new(),
            chosen: BTreeSet::new(),
            last_rejection: None,
        }
    }

    /// True when the node still needs a decision.
    pub fn is_open(&self, n: NodeRef) -> bool {
        !self.status.contains_key(&n)
    }

    pub fn proc_of(&self, n: NodeRef) -> Option<ProcId> {
        self.proc_of.get(&n).copied()
    }

    pub fn registered(&self, op: OpId) -> bool {
        self.registry.get(&op).is_some_and(|s| !s.is_empty())
    }

    pub fn row(&self, r: Row) -> f64 {
        self.row_sum.get(&r).copied().unwrap_or(0.0)
    }

    pub fn remaining_compute(&self, u: ProcId) -> f64 {
        self.inst.platform.speed(u) * (1.0 - self.row(Row::Compute(u)))
    }

    pub fn remaining_nic(&self, u: ProcId) -> f64 {
        self.inst.platform.nic(u) - self.row(Row::Nic(u))
    }

    pub fn hosts(&self, u: ProcId) -> impl Iterator<Item = OpId> + '_ {
        self.rows.get(&Row::Compute(u)).into_iter().flat_map(|m| {
            m.keys().filter_map(|k| match *k {
                BagKey::Compute { op, .. } => Some(op),
                _ => None,
            })
        })
    }

    pub fn complete(&self) -> bool {
        self.proc_of.len() == self.inst.node_count()
    }

    pub fn mapping(&self) -> Mapping {
        let mut m = Mapping::default();
        for (&n, s) in &self.status {
            match *s {
                Status::Assigned(u) => {
                    m.assign.insert(n, u);
                }
                Status::Consumer(q) => {
                    m.reuse.insert(n, q);
                }
                Status::Covered(_) => {}
            }
        }
        m.downloads = self.down_src.clone();
        m
    }

    fn capacity(&self, r: Row) -> f64 {
        let pf = &self.inst.platform;
        match r {
            Row::Compute(_) | Row::Receive(_) | Row::Send(_) => 1.0,
            Row::Nic(u) => pf.nic(u),
            Row::Link(u, v) => pf.link(u, v),
        }
    }

    fn contributions(&self, key: BagKey, rate: f64) -> Vec<(Row, f64)> {
        let pf = &self.inst.platform;
        match key {
            BagKey::Compute { u, op } => {
                let s = pf.speed(u);
                let c = if s > 0.0 { rate * self.inst.operators[op].comp / s } else { f64::INFINITY };
                vec![(Row::Compute(u), c)]
            }
            BagKey::Flow { op, src, dst } => {
                let bw = rate * self.inst.operators[op].out_size;
                let share = bw / pf.link(src, dst);
                vec![
                    (Row::Receive(dst), share),
                    (Row::Send(src), share),
                    (Row::Nic(dst), bw),
                    (Row::Nic(src), bw),
                    (Row::Link(src.min(dst), src.max(dst)), bw),
                ]
            }
            BagKey::Download { u, src, .. } => {
                vec![(Row::Nic(u), rate), (Row::Nic(src), rate), (Row::Link(u.min(src), u.max(src)), rate)]
            }
        }
    }

    fn resolved_in(&self, txn: &Txn, n: NodeRef) -> Option<ProcId> {
        if let Some(&u) = txn.resolved.get(&n) {
            return Some(u);
        }
        if txn.removed.contains(&n) {
            return None;
        }
        self.proc_of.get(&n).copied()
    }

    fn twins_in(&self, txn: &Txn, n: NodeRef) -> Vec<NodeRef> {
        let mut out: BTreeSet<NodeRef> = self.twins.get(&n).cloned().unwrap_or_default();
        for &(c, t) in &txn.twin_del {
            if c == n {
                out.remove(&t);
            }
        }
        for &(c, t) in &txn.twin_add {
            if c == n {
                out.insert(t);
            }
        }
        out.into_iter().collect()
    }

    /// Resolves the seeds and every twin reachable from them.
    fn expand(&self, txn: &mut Txn, seeds: Vec<(NodeRef, ProcId)>) {
        let mut queue: VecDeque<(NodeRef, ProcId)> = seeds.into();
        while let Some((n, u)) = queue.pop_front() {
            if txn.resolved.contains_key(&n) {
                continue;
            }
            txn.resolved.insert(n, u);
            for t in self.twins_in(txn, n) {
                queue.push_back((t, u));
            }
        }
    }

    fn pick_source(&self, txn: &Txn, u: ProcId, j: ObjId, rate: f64) -> Option<ProcId> {
        if let Some(&v) = self.down_src.get(&(u, j)).or(txn.sources.get(&(u, j))) {
            return Some(v);
        }
        let pf = &self.inst.platform;
        let mut best: Option<(f64, ProcId)> = None;
        for v in pf.holders(j) {
            let nic_ok = self.fits(self.row(Row::Nic(v)) + rate, pf.nic(v));
            let link_ok = self.fits(self.row(Row::Link(u.min(v), u.max(v))) + rate, pf.link(u, v));
            if !(nic_ok && link_ok) {
                continue;
            }
            let rem = self.remaining_nic(v);
            if best.map_or(true, |(b, _)| rem > b) {
                best = Some((rem, v));
            }
        }
        best.map(|(_, v)| v)
    }

    fn fits(&self, load: f64, cap: f64) -> bool {
        load <= cap + BUILD_EPS * cap.abs().max(1.0)
    }

    /// Adds the bag entries induced by the nodes resolved in `txn`.
    fn charge(&self, txn: &mut Txn) -> Result<(), Row> {
        let inst = self.inst;
        let resolved: Vec<(NodeRef, ProcId)> = txn.resolved.iter().map(|(&n, &u)| (n, u)).collect();
        for (n, u) in resolved {
            let op = inst.op(n);
            let rho = inst.rho(n.app);
            txn.adds.push((BagKey::Compute { u, op: op.id }, n, rho, n.app));
            for &j in &op.required_objects {
                if inst.platform.holds(u, j) {
                    continue;
                }
                let rate = inst.node_download_rate(n, j);
                let src = self.pick_source(txn, u, j, rate).ok_or(Row::Nic(u))?;
                txn.sources.insert((u, j), src);
                txn.adds.push((BagKey::Download { u, obj: j, src }, n, rate, n.app));
            }
            if let Some(p) = n.parent() {
                if let Some(w) = self.resolved_in(txn, p) {
                    if w != u {
                        txn.adds.push((BagKey::Flow { op: op.id, src: u, dst: w }, n, rho, n.app));
                    }
                }
            }
            for c in inst.children(n) {
                if txn.resolved.contains_key(&c) {
                    continue;
                }
                if let Some(v) = self.resolved_in(txn, c) {
                    if v != u {
                        let key = BagKey::Flow { op: inst.op_id(c), src: v, dst: u };
                        txn.adds.push((key, c, rho, n.app));
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn evaluate(&self, txn: &Txn) -> Result<Eval, Row> {
        let mut touched: BTreeMap<BagKey, Bag> = BTreeMap::new();
        for n in &txn.removed {
            for &k in self.owned.get(n).into_iter().flatten() {
                let bag = touched.entry(k).or_insert_with(|| self.bags[&k].clone());
                bag.remove(n);
            }
        }
        for &(k, owner, rate, app) in &txn.adds {
            let bag = touched.entry(k).or_insert_with(|| self.bags.get(&k).cloned().unwrap_or_default());
            let e = bag.entry(owner).or_insert((rate, app));
            if rate > e.0 {
                *e = (rate, app);
            }
        }

        let mut rows: BTreeMap<Row, BTreeMap<BagKey, Option<f64>>> = BTreeMap::new();
        let mut deltas: BTreeMap<Row, f64> = BTreeMap::new();
        for (&k, bag) in &touched {
            let old = self.bags.get(&k).and_then(bag_max);
            let new = bag_max(bag);
            if old == new {
                continue;
            }
            if let Some(r) = old {
                for (row, c) in self.contributions(k, r) {
                    *deltas.entry(row).or_default() -= c;
                    rows.entry(row).or_default().insert(k, None);
                }
            }
            if let Some(r) = new {
                for (row, c) in self.contributions(k, r) {
                    if !c.is_finite() {
                        return Err(row);
                    }
                    *deltas.entry(row).or_default() += c;
                    rows.entry(row).or_default().insert(k, Some(c));
                }
            }
        }
        let mut footprint = 0.0;
        for (&row, &d) in &deltas {
            let load = self.row(row) + d;
            if d > 0.0 && !self.fits(load, self.capacity(row)) {
                return Err(row);
            }
            if let Row::Link(..) = row {
                footprint += d;
            }
        }
        Ok(Eval { bags: touched.into_iter().collect(), rows, footprint })
    }

    pub(crate) fn commit(&mut self, txn: Txn, eval: Eval) {
        for n in &txn.removed {
            self.owned.remove(n);
            self.proc_of.remove(n);
        }
        for &(k, owner, _, _) in &txn.adds {
            self.owned.entry(owner).or_default().insert(k);
        }
        for (k, bag) in eval.bags {
            if let BagKey::Download { u, obj, src } = k {
                if bag.is_empty() {
                    self.down_src.remove(&(u, obj));
                } else {
                    self.down_src.insert((u, obj), src);
                }
            }
            if bag.is_empty() {
                self.bags.remove(&k);
            } else {
                self.bags.insert(k, bag);
            }
        }
        for (row, changes) in eval.rows {
            let entries = self.rows.entry(row).or_default();
            for (k, c) in changes {
                match c {
                    Some(c) => entries.insert(k, c),
                    None => entries.remove(&k),
                };
            }
            let sum: f64 = entries.values().sum();
            self.row_sum.insert(row, sum);
        }
        for (n, s) in txn.status {
            match self.status.get(&n) {
                Some(Status::Assigned(_)) => {
                    self.registry.entry(self.inst.op_id(n)).or_default().remove(&n);
                }
                Some(Status::Consumer(q)) => {
                    *self.consumers.entry(*q).or_default() -= 1;
                }
                _ => {}
            }
            match s {
                Some(Status::Assigned(_)) => {
                    self.registry.entry(self.inst.op_id(n)).or_default().insert(n);
                }
                Some(Status::Consumer(q)) => {
                    *self.consumers.entry(q).or_default() += 1;
                }
                _ => {}
            }
            match s {
                Some(s) => self.status.insert(n, s),
                None => self.status.remove(&n),
            };
        }
        for (c, t) in txn.twin_del {
            if let Some(set) = self.twins.get_mut(&c) {
                set.remove(&t);
                if set.is_empty() {
                    self.twins.remove(&c);
                }
            }
        }
        for (c, t) in txn.twin_add {
            self.twins.entry(c).or_default().insert(t);
        }
        for (n, u) in txn.resolved {
            self.proc_of.insert(n, u);
        }
    }

    fn run(&mut self, mut txn: Txn, seeds: Vec<(NodeRef, ProcId)>) -> Result<(Txn, Eval), Row> {
        self.expand(&mut txn, seeds);
        self.charge(&mut txn)?;
        let eval = self.evaluate(&txn)?;
        Ok((txn, eval))
    }

    /// Places an open node on `u`; leaves the state untouched on rejection.
    pub fn try_place(&mut self, n: NodeRef, u: ProcId) -> bool {
        debug_assert!(self.is_open(n));
        let txn = Txn { status: vec![(n, Some(Status::Assigned(u)))], ..Txn::default() };
        match self.run(txn, vec![(n, u)]) {
            Ok((txn, eval)) => {
                self.commit(txn, eval);
                self.chosen.insert(u);
                true
            }
            Err(row) => {
                self.last_rejection = Some(row);
                false
            }
        }
    }

    /// Plans `n` consuming the result of the assigned node `q`. Already
    /// decided nodes strictly below `n` are released, provided none of them is
    /// a producer or has waiting twins.
    fn plan_reuse(&mut self, n: NodeRef, q: NodeRef) -> Option<Result<(Txn, Eval), Row>> {
        let inst = self.inst;
        let pq = match self.status.get(&q) {
            Some(&Status::Assigned(u)) => u,
            _ => return None,
        };
        if q == n || inst.op_id(q) != inst.op_id(n) {
            return None;
        }
        let below: Vec<NodeRef> = inst.apps[n.app]
            .subtree(n.node)
            .into_iter()
            .filter(|&i| i != n.node)
            .map(|i| NodeRef::new(n.app, i))
            .collect();
        let below_set: BTreeSet<NodeRef> = below.iter().copied().collect();
        for x in &below {
            if self.consumers.get(x).copied().unwrap_or(0) > 0 || self.twins.contains_key(x) {
                return None;
            }
        }
        // Resolution chains starting under the producer must not enter the
        // released subtree.
        let limit = inst.node_count() + 1;
        for i in inst.apps[q.app].subtree(q.node) {
            let mut z = NodeRef::new(q.app, i);
            for _ in 0..=limit {
                if z == n || below_set.contains(&z) {
                    return None;
                }
                match self.status.get(&z) {
                    Some(Status::Covered(t)) => z = *t,
                    _ => break,
                }
            }
        }

        let mut txn = Txn::default();
        txn.status.push((n, Some(Status::Consumer(q))));
        let mut seeds = vec![(n, pq)];
        for &x in &below {
            if self.status.contains_key(&x) {
                txn.removed.insert(x);
            }
            if let Some(&Status::Covered(t)) = self.status.get(&x) {
                txn.twin_del.push((t, x));
            }
            let t = NodeRef::new(q.app, transpose(n.node, q.node, x.node));
            txn.status.push((x, Some(Status::Covered(t))));
        }
        for &x in &below {
            let t = NodeRef::new(q.app, transpose(n.node, q.node, x.node));
            match self.resolved_in(&txn, t) {
                Some(u) => seeds.push((x, u)),
                None => txn.twin_add.push((t, x)),
            }
        }
        Some(self.run(txn, seeds))
    }

    /// Satisfies the open node `n` by reuse of a registered copy. Among
    /// admissible producers the one adding the least link traffic wins; ties
    /// go to the lower processor id.
    pub fn try_reuse(&mut self, n: NodeRef) -> bool {
        let op = self.inst.op_id(n);
        let producers: Vec<NodeRef> = self.registry.get(&op).into_iter().flatten().copied().collect();
        let mut best: Option<(f64, ProcId, Txn, Eval)> = None;
        for q in producers {
            match self.plan_reuse(n, q) {
                Some(Ok((txn, eval))) => {
                    let u = self.proc_of[&q];
                    let better = match &best {
                        None => true,
                        Some((f, bu, _, _)) => eval.footprint < *f || (eval.footprint == *f && u < *bu),
                    };
                    if better {
                        best = Some((eval.footprint, u, txn, eval));
                    }
                }
                Some(Err(row)) => self.last_rejection = Some(row),
                None => {}
            }
        }
        match best {
            Some((_, _, txn, eval)) => {
                self.commit(txn, eval);
                true
            }
            None => false,
        }
    }

    /// Recomputes every row from the bags; used to assert consistency.
    #[cfg(test)]
    pub fn recomputed_rows(&self) -> BTreeMap<Row, f64> {
        let mut out: BTreeMap<Row, f64> = BTreeMap::new();
        for (&k, bag) in &self.bags {
            if let Some(r) = bag_max(bag) {
                for (row, c) in self.contributions(k, r) {
                    *out.entry(row).or_default() += c;
                }
            }
        }
        out
    }
}
