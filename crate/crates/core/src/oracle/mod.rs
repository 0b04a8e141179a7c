//! Exhaustive search over every mapping of a tiny instance.
//!
//! The oracle has its own constraint evaluator, written directly from the
//! definitions and sharing no code with [`crate::feasibility`], so the two
//! can be cross-checked.
//!
//! The search space: every reuse configuration (each node not below a
//! consumer is either computed or consumes a computed node with the same
//! operator), every processor for every computed node, and every holder as
//! the source of every needed download.

mod eval;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{transpose, Instance, Mapping, NodeRef, ObjId, ProcId};
use crate::objectives::{CostVector, Objective};
pub use eval::{evaluate_mapping, OracleEval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_procs: usize,
    pub max_states: u64,
    pub objective: Objective,
    /// When false only mappings without reuse are searched.
    pub reuse: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_nodes: 8, max_procs: 4, max_states: 10_000_000, objective: Objective::ProcPower, reuse: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub mapping: Mapping,
    pub cost: CostVector,
    pub explored: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {nodes} nodes, {procs} processors")]
    TooLarge { nodes: usize, procs: usize },
    #[error("state budget exhausted after {explored} mappings")]
    BudgetExceeded { explored: u64, best: Option<Box<OracleSolution>> },
    #[error("no feasible mapping exists ({explored} mappings explored)")]
    Infeasible { explored: u64 },
    #[error("invalid oracle limits: {0}")]
    BadLimits(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Computed,
    Consumer(usize),
    Covered,
}

struct Space {
    nodes: Vec<NodeRef>,
    ops: Vec<usize>,
}

impl Space {
    fn index(&self, n: NodeRef) -> Option<usize> {
        self.nodes.binary_search(&n).ok()
    }

    fn has_consumer_ancestor(&self, roles: &[Option<Role>], i: usize) -> bool {
        let mut cur = self.nodes[i].parent();
        while let Some(a) = cur {
            let ai = self.index(a).expect("parent exists");
            if matches!(roles[ai], Some(Role::Consumer(_))) {
                return true;
            }
            cur = a.parent();
        }
        false
    }

    /// Index of the computed node each node's result comes from.
    fn slots(&self, roles: &[Role], producer: &[usize]) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut out = vec![usize::MAX; n];
        for start in 0..n {
            let mut cur = start;
            let mut hops = 0;
            loop {
                hops += 1;
                if hops > n + 2 {
                    return None;
                }
                match roles[cur] {
                    Role::Computed => break,
                    Role::Consumer(_) => {
                        cur = producer[cur];
                    }
                    Role::Covered => {
                        let node = self.nodes[cur];
                        let mut c = node.parent().expect("covered nodes have a parent");
                        loop {
                            let ci = self.index(c).expect("ancestor exists");
                            if let Role::Consumer(_) = roles[ci] {
                                let q = self.nodes[producer[ci]];
                                let t = NodeRef::new(q.app, transpose(c.node, q.node, node.node));
                                cur = self.index(t)?;
                                break;
                            }
                            c = c.parent().expect("a consumer ancestor exists");
                        }
                    }
                }
            }
            out[start] = cur;
        }
        Some(out)
    }
}

/// Every resolvable reuse configuration, as (roles, producer per consumer).
fn reuse_configs(space: &Space, allow: bool) -> Vec<(Vec<Role>, Vec<usize>)> {
    let n = space.nodes.len();
    let mut out = Vec::new();
    let mut roles: Vec<Option<Role>> = vec![None; n];
    // Phase one: computed / consumer / covered per node, in parent-first order.
    fn rec(
        space: &Space,
        allow: bool,
        i: usize,
        roles: &mut Vec<Option<Role>>,
        out: &mut Vec<Vec<Role>>,
    ) {
        if i == roles.len() {
            out.push(roles.iter().map(|r| r.expect("all decided")).collect());
            return;
        }
        if space.has_consumer_ancestor(roles, i) {
            roles[i] = Some(Role::Covered);
            rec(space, allow, i + 1, roles, out);
            return;
        }
        roles[i] = Some(Role::Computed);
        rec(space, allow, i + 1, roles, out);
        let dup = (0..roles.len()).any(|j| j != i && space.ops[j] == space.ops[i]);
        if allow && dup {
            roles[i] = Some(Role::Consumer(usize::MAX));
            rec(space, allow, i + 1, roles, out);
        }
        roles[i] = None;
    }
    let mut shapes = Vec::new();
    rec(space, allow, 0, &mut roles, &mut shapes);

    for shape in shapes {
        let consumers: Vec<usize> = (0..n).filter(|&i| matches!(shape[i], Role::Consumer(_))).collect();
        let options: Vec<Vec<usize>> = consumers
            .iter()
            .map(|&c| (0..n).filter(|&q| shape[q] == Role::Computed && space.ops[q] == space.ops[c]).collect())
            .collect();
        if options.iter().any(|o| o.is_empty()) {
            continue;
        }
        let mut pick = vec![0usize; consumers.len()];
        loop {
            let mut producer = vec![usize::MAX; n];
            let mut roles = shape.clone();
            for (k, &c) in consumers.iter().enumerate() {
                producer[c] = options[k][pick[k]];
                roles[c] = Role::Consumer(producer[c]);
            }
            if space.slots(&roles, &producer).is_some() {
                out.push((roles, producer));
            }
            if !advance(&mut pick, |k| options[k].len()) {
                break;
            }
        }
    }
    out
}

/// Odometer step; false after the last combination.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < radix(k) {
            return true;
        }
        digits[k] = 0;
    }
    false
}

/// Calls `visit` on every enumerated mapping together with the oracle's
/// evaluation of it. Returns the number of mappings visited.
pub fn enumerate_mappings(
    inst: &Instance,
    limits: &OracleLimits,
    mut visit: impl FnMut(&Mapping, &OracleEval),
) -> Result<u64, OracleError> {
    search(inst, limits, |m, e| {
        visit(&m(), e);
    })
    .map(|(n, _)| n)
}

/// Feasible mapping minimizing `limits.objective`. Ties are broken by the
/// remaining costs in the order Proc-Nb, Proc-Power, BW-Sum, BW-Max, then by
/// the lexicographically smallest (assignment, reuse, downloads).
pub fn exact_solve(inst: &Instance, limits: &OracleLimits) -> Result<OracleSolution, OracleError> {
    let objective = limits.objective;
    let rank = |c: &CostVector| -> [f64; 5] {
        [c.get(objective), c.proc_nb as f64, c.proc_power, c.bw_sum, c.bw_max]
    };
    let mut best: Option<([f64; 5], Key, Mapping, CostVector)> = None;
    let (explored, budget_hit) = search_keyed(inst, limits, |key, make, e| {
        if !e.feasible {
            return;
        }
        let c = rank(&e.cost);
        let better = match &best {
            None => true,
            Some((bc, bk, _, _)) => match c.iter().zip(bc).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal) {
                Ordering::Less => true,
                Ordering::Equal => key < bk,
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((c, key.clone(), make(), e.cost));
        }
    })?;
    let best = best.map(|(_, _, mapping, cost)| OracleSolution { mapping, cost, explored });
    if budget_hit {
        return Err(OracleError::BudgetExceeded { explored, best: best.map(Box::new) });
    }
    best.ok_or(OracleError::Infeasible { explored })
}

type Key = (Vec<usize>, Vec<usize>, Vec<ProcId>);

fn search(
    inst: &Instance,
    limits: &OracleLimits,
    mut visit: impl FnMut(&dyn Fn() -> Mapping, &OracleEval),
) -> Result<(u64, bool), OracleError> {
    let (n, hit) = search_keyed(inst, limits, |_, make, e| visit(make, e))?;
    if hit {
        return Err(OracleError::BudgetExceeded { explored: n, best: None });
    }
    Ok((n, hit))
}

fn search_keyed(
    inst: &Instance,
    limits: &OracleLimits,
    mut visit: impl FnMut(&Key, &dyn Fn() -> Mapping, &OracleEval),
) -> Result<(u64, bool), OracleError> {
    if limits.max_states == 0 {
        return Err(OracleError::BadLimits("max_states must be positive".into()));
    }
    let p = inst.platform.len();
    let nodes: Vec<NodeRef> = inst.nodes().collect();
    if nodes.len() > limits.max_nodes || p > limits.max_procs {
        return Err(OracleError::TooLarge { nodes: nodes.len(), procs: p });
    }
    let ops = nodes.iter().map(|&n| inst.op_id(n)).collect();
    let space = Space { nodes, ops };
    let n = space.nodes.len();
    let mut explored = 0u64;
    if p == 0 {
        return Ok((0, false));
    }

    for (roles, producer) in reuse_configs(&space, limits.reuse) {
        let slots = space.slots(&roles, &producer).expect("configs are resolvable");
        let computed: Vec<usize> = (0..n).filter(|&i| roles[i] == Role::Computed).collect();
        let mut odo = vec![0usize; computed.len()];
        let mut proc_of_slot = vec![usize::MAX; n];
        loop {
            for (k, &i) in computed.iter().enumerate() {
                proc_of_slot[i] = odo[k];
            }
            let placed: Vec<ProcId> = (0..n).map(|i| proc_of_slot[slots[i]]).collect();
            let mut needed: Vec<(ProcId, ObjId)> = Vec::new();
            for i in 0..n {
                for &j in &inst.op(space.nodes[i]).required_objects {
                    if !inst.platform.holds(placed[i], j) {
                        needed.push((placed[i], j));
                    }
                }
            }
            needed.sort_unstable();
            needed.dedup();
            let holders: Vec<Vec<ProcId>> = needed.iter().map(|&(_, j)| inst.platform.holders(j).collect()).collect();
            let mut src = vec![0usize; needed.len()];
            if holders.iter().all(|h| !h.is_empty()) {
                loop {
                    explored += 1;
                    if explored > limits.max_states {
                        return Ok((explored - 1, true));
                    }
                    let sources: Vec<ProcId> = src.iter().enumerate().map(|(k, &s)| holders[k][s]).collect();
                    let make = || {
                        let mut m = Mapping::default();
                        for (k, &i) in computed.iter().enumerate() {
                            m.assign.insert(space.nodes[i], odo[k]);
                        }
                        for i in 0..n {
                            if let Role::Consumer(q) = roles[i] {
                                m.reuse.insert(space.nodes[i], space.nodes[q]);
                            }
                        }
                        for (k, &(u, j)) in needed.iter().enumerate() {
                            m.downloads.insert((u, j), sources[k]);
                        }
                        m
                    };
                    let e = eval::evaluate_placed(inst, &space.nodes, &placed, &needed, &sources, &odo);
                    let role_key: Vec<usize> = (0..n)
                        .map(|i| match roles[i] {
                            Role::Computed => 0,
                            Role::Consumer(q) => 1 + q,
                            Role::Covered => usize::MAX,
                        })
                        .collect();
                    let assign_key: Vec<usize> = (0..n).map(|i| if roles[i] == Role::Computed { placed[i] } else { usize::MAX }).collect();
                    let key = (assign_key, role_key, sources.clone());
                    visit(&key, &make, &e);
                    if !advance(&mut src, |k| holders[k].len()) {
                        break;
                    }
                }
            }
            if !advance(&mut odo, |_| p) {
                break;
            }
        }
    }
    Ok((explored, false))
}
