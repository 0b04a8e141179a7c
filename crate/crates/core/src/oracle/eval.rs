use serde::Serialize;

use crate::model::{transpose, Instance, Mapping, NodeRef, ObjId, ProcId};
use crate::objectives::CostVector;
use crate::within;

/// Constraint left-hand sides computed from scratch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEval {
    pub compute: Vec<f64>,
    pub recv: Vec<f64>,
    pub send: Vec<f64>,
    pub nic: Vec<f64>,
    /// Row-major `p x p`, symmetric, zero diagonal.
    pub link: Vec<f64>,
    pub feasible: bool,
    pub cost: CostVector,
}

impl OracleEval {
    pub fn link(&self, u: ProcId, v: ProcId) -> f64 {
        self.link[u * self.compute.len() + v]
    }
}

/// Evaluates an arbitrary mapping; `None` if some node cannot be resolved
/// to a processor or a needed download has no source.
pub fn evaluate_mapping(inst: &Instance, m: &Mapping) -> Option<OracleEval> {
    let nodes: Vec<NodeRef> = inst.nodes().collect();
    let mut placed = Vec::with_capacity(nodes.len());
    for &n in &nodes {
        let mut cur = n;
        let mut hops = 0;
        let u = loop {
            hops += 1;
            if hops > nodes.len() + 2 {
                return None;
            }
            let mut consumer = None;
            let mut a = Some(cur);
            while let Some(x) = a {
                if m.reuse.contains_key(&x) {
                    consumer = Some(x);
                    break;
                }
                a = x.parent();
            }
            match consumer {
                None => break *m.assign.get(&cur)?,
                Some(c) => {
                    let q = m.reuse[&c];
                    cur = NodeRef::new(q.app, transpose(c.node, q.node, cur.node));
                    if !inst.contains(cur) {
                        return None;
                    }
                }
            }
        };
        placed.push(u);
    }
    let mut needed = Vec::new();
    let mut sources = Vec::new();
    for (i, &n) in nodes.iter().enumerate() {
        for &j in &inst.op(n).required_objects {
            if !inst.platform.holds(placed[i], j) && !needed.contains(&(placed[i], j)) {
                needed.push((placed[i], j));
                sources.push(*m.downloads.get(&(placed[i], j))?);
            }
        }
    }
    let used: Vec<ProcId> = m.assign.values().copied().collect();
    Some(evaluate_placed(inst, &nodes, &placed, &needed, &sources, &used))
}

pub(crate) fn evaluate_placed(
    inst: &Instance,
    nodes: &[NodeRef],
    placed: &[ProcId],
    needed: &[(ProcId, ObjId)],
    sources: &[ProcId],
    computing: &[ProcId],
) -> OracleEval {
    let p = inst.platform.len();
    let n_ops = inst.operators.len();
    let n_obj = inst.objects.len();
    let pf = &inst.platform;

    // Highest rate per (processor, operator), per (receiver, operator,
    // sender) and per (processor, object).
    let mut op_rate = vec![0.0f64; p * n_ops];
    let mut flow_rate = vec![0.0f64; p * n_ops * p];
    let mut obj_rate = vec![0.0f64; p * n_obj];
    for (i, &n) in nodes.iter().enumerate() {
        let u = placed[i];
        let tree = &inst.apps[n.app];
        let node = &tree.nodes[&n.node];
        let rho = tree.throughput;
        let r = &mut op_rate[u * n_ops + node.operator];
        *r = r.max(rho);
        if n.node > 1 {
            let pi = nodes.binary_search(&NodeRef::new(n.app, n.node / 2)).expect("parent present");
            let w = placed[pi];
            if w != u {
                let f = &mut flow_rate[(w * n_ops + node.operator) * p + u];
                *f = f.max(rho);
            }
        }
        for (&j, &freq) in &node.object_freqs {
            if !pf.holds(u, j) {
                let d = &mut obj_rate[u * n_obj + j];
                *d = d.max(inst.objects[j].size * freq);
            }
        }
    }

    let mut compute = vec![0.0; p];
    let mut recv = vec![0.0; p];
    let mut send = vec![0.0; p];
    let mut nic = vec![0.0; p];
    let mut link = vec![0.0; p * p];
    for u in 0..p {
        let s = pf.speed(u);
        for op in 0..n_ops {
            let rate = op_rate[u * n_ops + op];
            if rate > 0.0 {
                compute[u] += if s > 0.0 { rate * inst.operators[op].comp / s } else { f64::INFINITY };
            }
        }
    }
    for dst in 0..p {
        for op in 0..n_ops {
            for src in 0..p {
                let rate = flow_rate[(dst * n_ops + op) * p + src];
                if rate == 0.0 {
                    continue;
                }
                let bw = rate * inst.operators[op].out_size;
                let bl = pf.link(src, dst);
                recv[dst] += bw / bl;
                send[src] += bw / bl;
                nic[dst] += bw;
                nic[src] += bw;
                link[dst * p + src] += bw;
                link[src * p + dst] += bw;
            }
        }
    }
    for (k, &(u, j)) in needed.iter().enumerate() {
        let v = sources[k];
        let rate = obj_rate[u * n_obj + j];
        nic[u] += rate;
        nic[v] += rate;
        link[u * p + v] += rate;
        link[v * p + u] += rate;
    }

    let mut feasible = true;
    for u in 0..p {
        feasible &= within(compute[u], 1.0) && within(recv[u], 1.0) && within(send[u], 1.0);
        feasible &= within(nic[u], pf.nic(u));
        for v in u + 1..p {
            feasible &= within(link[u * p + v], pf.link(u, v));
        }
    }
    for (k, &(_, j)) in needed.iter().enumerate() {
        feasible &= pf.holds(sources[k], j);
    }

    let mut used = computing.to_vec();
    used.sort_unstable();
    used.dedup();
    let mut bw_sum = 0.0;
    let mut bw_max: f64 = 0.0;
    for u in 0..p {
        for v in u + 1..p {
            let l = link[u * p + v];
            bw_sum += l;
            if l != 0.0 {
                bw_max = bw_max.max(l / pf.link(u, v));
            }
        }
    }
    let cost = CostVector { proc_nb: used.len(), proc_power: compute.iter().fold(0.0, |a, x| a + x), bw_sum, bw_max };
    OracleEval { compute, recv, send, nic, link, feasible, cost }
}
