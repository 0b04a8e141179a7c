//! Variable and row counts per family as closed-form expressions in a few
//! instance statistics. Kept apart from the builder so each checks the other.

use std::collections::{BTreeMap, BTreeSet};

use super::IlpObjective;
use crate::model::{Instance, NodeRef};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FamilyCounts {
    pub vars: BTreeMap<String, usize>,
    pub rows: BTreeMap<String, usize>,
}

impl FamilyCounts {
    pub fn total_vars(&self) -> usize {
        self.vars.values().sum()
    }

    pub fn total_rows(&self) -> usize {
        self.rows.values().sum()
    }
}

/// Per application `k`: nodes `n`, edges `e = n - 1`, distinct operators
/// `o`, distinct (parent op, child op) pairs `oe`, distinct child operators
/// `c`, distinct objects `j`, node/object incidences `r`. Global: distinct
/// operators `O`, child operators `C`, objects `J`. Rows that would have no
/// terms are not counted; all link bandwidths are assumed positive.
pub fn closed_form_counts(inst: &Instance, objective: IlpObjective) -> FamilyCounts {
    let p = inst.platform.len();
    let (p2, pp) = (p * p, p * p.saturating_sub(1));
    let (mut n, mut e, mut o, mut oe, mut c, mut j, mut r) = (0, 0, 0, 0, 0, 0, 0);
    let (mut all_o, mut all_c, mut all_j) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
    for (k, app) in inst.apps.iter().enumerate() {
        let mut ops = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        let mut objs = BTreeSet::new();
        for &i in app.nodes.keys() {
            let q = inst.op_id(NodeRef::new(k, i));
            ops.insert(q);
            if i > 1 {
                pairs.insert((inst.op_id(NodeRef::new(k, i / 2)), q));
            }
            let req = &inst.operators[q].required_objects;
            r += req.len();
            objs.extend(req.iter().copied());
        }
        let childs: BTreeSet<_> = pairs.iter().map(|&(_, q)| q).collect();
        n += app.nodes.len();
        e += app.nodes.len().saturating_sub(1);
        o += ops.len();
        oe += pairs.len();
        c += childs.len();
        j += objs.len();
        all_o.extend(ops);
        all_c.extend(childs);
        all_j.extend(objs);
    }
    let (big_o, big_c, big_j) = (all_o.len(), all_c.len(), all_j.len());
    let comm = big_c > 0 || big_j > 0;
    let some = |cond: bool, v: usize| if cond { v } else { 0 };

    let mut vars = BTreeMap::new();
    let put = |m: &mut BTreeMap<String, usize>, name: &str, v: usize| {
        if v > 0 {
            m.insert(name.to_string(), v);
        }
    };
    put(&mut vars, "x", n * p);
    put(&mut vars, "d", j * p2);
    put(&mut vars, "src", big_j * p2);
    put(&mut vars, "y", e * p2);
    put(&mut vars, "used", p);
    put(&mut vars, "xop", o * p);
    put(&mut vars, "yop", oe * p2);
    put(&mut vars, "ch", c * pp);
    put(&mut vars, "par", c * pp);
    put(&mut vars, "rho", big_o * p);
    put(&mut vars, "fr", big_c * pp);
    put(&mut vars, "ratemax", big_j * pp);
    put(&mut vars, "bwmax", some(objective == IlpObjective::BwMax, 1));

    let mut rows = BTreeMap::new();
    put(&mut rows, "place", some(p > 0, n));
    put(&mut rows, "avail", j * p2);
    put(&mut rows, "dsrc", j * p2);
    put(&mut rows, "onesrc", big_j * p);
    put(&mut rows, "dmax", j * p);
    put(&mut rows, "cover", r * p);
    put(&mut rows, "ypar", e * p2);
    put(&mut rows, "ychd", e * p2);
    put(&mut rows, "ylo", e * p2);
    put(&mut rows, "usedlo", some(n > 0, p));
    put(&mut rows, "usedhi", n * p);
    put(&mut rows, "xophi", n * p);
    put(&mut rows, "xoplo", o * p);
    put(&mut rows, "yophi", e * p2);
    put(&mut rows, "yoplo", oe * p2);
    put(&mut rows, "chlo", c * pp);
    put(&mut rows, "chhi", oe * pp);
    put(&mut rows, "parlo", c * pp);
    put(&mut rows, "parhi", oe * pp);
    put(&mut rows, "thr", o * p);
    put(&mut rows, "frch", c * pp);
    put(&mut rows, "frpar", c * pp);
    put(&mut rows, "rate", j * pp);
    put(&mut rows, "comp", some(big_o > 0, p));
    put(&mut rows, "recv", some(big_c > 0 && p > 1, p));
    put(&mut rows, "send", some(big_c > 0 && p > 1, p));
    put(&mut rows, "nic", some(comm && p > 1, p));
    put(&mut rows, "link", some(comm, pp / 2));
    put(&mut rows, "bwmax", some(comm && objective == IlpObjective::BwMax, pp / 2));
    FamilyCounts { vars, rows }
}
