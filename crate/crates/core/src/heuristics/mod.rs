//! Greedy mapping heuristics for the Proc-Power problem.
//!
//! Six traversal policies (two random, two top-down, two bottom-up) are
//! crossed with four processor-selection strategies. All of them build the
//! mapping through [`state::State`], which accepts a step only if every
//! constraint still holds afterwards, so a returned mapping is feasible by
//! construction.

mod state;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, Mapping, NodeRef, OpId, ProcId};
pub use state::Row;
use state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl Heuristic {
    pub const ALL: [Heuristic; 6] = [Heuristic::H1, Heuristic::H2, Heuristic::H3, Heuristic::H4, Heuristic::H5, Heuristic::H6];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::H1 => "RandomNoReuse",
            Heuristic::H2 => "Random",
            Heuristic::H3 => "TopDownBFS",
            Heuristic::H4 => "TopDownDFS",
            Heuristic::H5 => "BottomUpBFS",
            Heuristic::H6 => "BottomUpDFS",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Heuristic::H1 => "h1",
            Heuristic::H2 => "h2",
            Heuristic::H3 => "h3",
            Heuristic::H4 => "h4",
            Heuristic::H5 => "h5",
            Heuristic::H6 => "h6",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.code().eq_ignore_ascii_case(s) || h.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown heuristic '{s}' (expected h1..h6)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Fastest processor not yet chosen.
    S1,
    /// Biggest network card not yet chosen.
    S2,
    /// Most remaining compute capacity.
    S3,
    /// Most remaining network card capacity.
    S4,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4];

    pub fn code(self) -> &'static str {
        match self {
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
            Strategy::S3 => "s3",
            Strategy::S4 => "s4",
        }
    }

    pub fn is_blocking(self) -> bool {
        matches!(self, Strategy::S1 | Strategy::S2)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy '{s}' (expected s1..s4)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicOptions {
    pub reuse: bool,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        HeuristicOptions { reuse: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{heuristic}/{strategy} failed at node {node}: {reason}")]
pub struct HeuristicFailure {
    pub heuristic: Heuristic,
    pub strategy: Strategy,
    pub node: NodeRef,
    pub reason: String,
}

struct Runner<'a> {
    st: State<'a>,
    strategy: Strategy,
    /// op → operators that require it
    parent_ops: Vec<BTreeSet<OpId>>,
}

impl<'a> Runner<'a> {
    fn new(inst: &'a Instance, strategy: Strategy) -> Self {
        let mut parent_ops = vec![BTreeSet::new(); inst.operators.len()];
        for o in &inst.operators {
            for &c in &o.required_operators {
                parent_ops[c].insert(o.id);
            }
        }
        Runner { st: State::new(inst), strategy, parent_ops }
    }

    /// Chosen processors stay available to operators related to one they host.
    fn hosts_relative(&self, u: ProcId, op: OpId) -> bool {
        let inst = self.st.inst;
        let kids = &inst.operators[op].required_operators;
        self.st.hosts(u).any(|h| kids.contains(&h) || self.parent_ops[op].contains(&h))
    }

    fn candidates(&self, n: NodeRef) -> Vec<ProcId> {
        let inst = self.st.inst;
        let pf = &inst.platform;
        let op = inst.op_id(n);
        // Once every processor has been chosen, blocking no longer excludes any.
        let exhausted = (0..pf.len()).all(|u| pf.speed(u) <= 0.0 || self.st.chosen.contains(&u));
        let blocking = self.strategy.is_blocking() && !exhausted;
        let mut c: Vec<(f64, ProcId)> = (0..pf.len())
            .filter(|&u| pf.speed(u) > 0.0)
            .filter(|&u| !blocking || !self.st.chosen.contains(&u) || self.hosts_relative(u, op))
            .map(|u| {
                let key = match self.strategy {
                    Strategy::S1 => pf.speed(u),
                    Strategy::S2 => pf.nic(u),
                    Strategy::S3 => self.st.remaining_compute(u),
                    Strategy::S4 => self.st.remaining_nic(u),
                };
                (key, u)
            })
            .collect();
        c.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        c.into_iter().map(|(_, u)| u).collect()
    }

    fn select(&mut self, n: NodeRef) -> Option<ProcId> {
        self.candidates(n).into_iter().find(|&u| self.st.try_place(n, u))
    }

    fn father(&mut self, n: NodeRef) -> bool {
        match n.parent().and_then(|p| self.st.proc_of(p)) {
            Some(u) => self.st.try_place(n, u),
            None => false,
        }
    }

    fn children(&mut self, n: NodeRef) -> bool {
        let procs: Vec<ProcId> = self.st.inst.children(n).filter_map(|c| self.st.proc_of(c)).collect();
        let mut tried = BTreeSet::new();
        procs.into_iter().any(|u| tried.insert(u) && self.st.try_place(n, u))
    }

    fn fail(&self, h: Heuristic, n: NodeRef) -> HeuristicFailure {
        let reason = match self.st.last_rejection {
            Some(row) => format!("no processor admits the node ({row} exhausted)"),
            None => "no eligible processor".to_string(),
        };
        HeuristicFailure { heuristic: h, strategy: self.strategy, node: n, reason }
    }
}

fn bfs_order(inst: &Instance) -> Vec<NodeRef> {
    let mut out = Vec::with_capacity(inst.node_count());
    let mut queue: VecDeque<NodeRef> = (0..inst.apps.len()).map(|k| NodeRef::new(k, 1)).collect();
    while let Some(n) = queue.pop_front() {
        if !inst.contains(n) {
            continue;
        }
        out.push(n);
        queue.extend(inst.children(n));
    }
    out
}

fn dfs_preorder(inst: &Instance) -> Vec<NodeRef> {
    let mut out = Vec::with_capacity(inst.node_count());
    for k in 0..inst.apps.len() {
        let mut stack = vec![NodeRef::new(k, 1)];
        while let Some(n) = stack.pop() {
            if !inst.contains(n) {
                continue;
            }
            out.push(n);
            let kids: Vec<NodeRef> = inst.children(n).collect();
            stack.extend(kids.into_iter().rev());
        }
    }
    out
}

fn dfs_postorder(inst: &Instance) -> Vec<NodeRef> {
    let mut out = Vec::with_capacity(inst.node_count());
    for k in 0..inst.apps.len() {
        let mut stack = vec![(NodeRef::new(k, 1), false)];
        while let Some((n, done)) = stack.pop() {
            if !inst.contains(n) {
                continue;
            }
            if done {
                out.push(n);
                continue;
            }
            stack.push((n, true));
            let kids: Vec<NodeRef> = inst.children(n).collect();
            stack.extend(kids.into_iter().rev().map(|c| (c, false)));
        }
    }
    out
}

/// Runs one heuristic. The seed only matters for H1 and H2.
pub fn run_heuristic(
    inst: &Instance,
    h: Heuristic,
    strategy: Strategy,
    seed: u64,
) -> Result<Mapping, HeuristicFailure> {
    run_heuristic_with(inst, h, strategy, seed, HeuristicOptions::default())
}

pub fn run_heuristic_with(
    inst: &Instance,
    h: Heuristic,
    strategy: Strategy,
    seed: u64,
    opts: HeuristicOptions,
) -> Result<Mapping, HeuristicFailure> {
    let mut r = Runner::new(inst, strategy);
    let reuse = opts.reuse && h != Heuristic::H1;
    match h {
        Heuristic::H1 | Heuristic::H2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            loop {
                let open: Vec<NodeRef> = inst.nodes().filter(|&n| r.st.is_open(n)).collect();
                if open.is_empty() {
                    break;
                }
                let n = open[rng.gen_range(0..open.len())];
                let ok = if reuse && r.st.registered(inst.op_id(n)) {
                    r.st.try_reuse(n) || r.select(n).is_some()
                } else {
                    r.father(n) || r.children(n) || r.select(n).is_some()
                };
                if !ok {
                    return Err(r.fail(h, n));
                }
            }
        }
        Heuristic::H3 | Heuristic::H4 => {
            let order = if h == Heuristic::H3 { bfs_order(inst) } else { dfs_preorder(inst) };
            for n in order {
                if !r.st.is_open(n) {
                    continue;
                }
                let ok = if reuse && r.st.registered(inst.op_id(n)) {
                    r.father(n) || r.st.try_reuse(n) || r.select(n).is_some()
                } else {
                    r.father(n) || r.select(n).is_some()
                };
                if !ok {
                    return Err(r.fail(h, n));
                }
            }
        }
        Heuristic::H5 => {
            let mut order = bfs_order(inst);
            order.reverse();
            for n in order {
                if !r.st.is_open(n) {
                    continue;
                }
                let reused = reuse && r.st.registered(inst.op_id(n)) && r.st.try_reuse(n);
                if !(reused || r.children(n) || r.select(n).is_some()) {
                    return Err(r.fail(h, n));
                }
            }
        }
        Heuristic::H6 => {
            for n in dfs_postorder(inst) {
                if !r.st.is_open(n) {
                    continue;
                }
                let registered = reuse && r.st.registered(inst.op_id(n));
                let mut done = false;
                if registered && inst.children(n).all(|c| r.st.proc_of(c).is_none()) {
                    let mut top = n;
                    while let Some(p) = top.parent() {
                        if r.st.is_open(p) && r.st.registered(inst.op_id(p)) {
                            top = p;
                        } else {
                            break;
                        }
                    }
                    done = top != n && r.st.try_reuse(top);
                }
                if !r.st.is_open(n) {
                    continue;
                }
                done = done || (registered && r.st.try_reuse(n)) || r.children(n) || r.select(n).is_some();
                if !done {
                    return Err(r.fail(h, n));
                }
            }
        }
    }
    debug_assert!(r.st.complete());
    Ok(r.st.mapping())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::check;
    use crate::generator::{generate, make_similar_pair, GenParams};
    use crate::objectives::evaluate;
    use crate::feasibility::build_comm_sets;

    fn all_cells() -> impl Iterator<Item = (Heuristic, Strategy)> {
        Heuristic::ALL.into_iter().flat_map(|h| Strategy::ALL.into_iter().map(move |s| (h, s)))
    }

    #[test]
    fn parse_names() {
        assert_eq!("h3".parse::<Heuristic>().unwrap(), Heuristic::H3);
        assert_eq!("TopDownBFS".parse::<Heuristic>().unwrap(), Heuristic::H3);
        assert_eq!("S4".parse::<Strategy>().unwrap(), Strategy::S4);
        assert!("h7".parse::<Heuristic>().is_err());
        assert!("s0".parse::<Strategy>().is_err());
    }

    #[test]
    fn generated_outputs_are_feasible_and_deterministic() {
        let p = GenParams { n_apps: 3, max_ops_per_app: 15, n_procs: 12, ..GenParams::default() };
        for seed in 0..4 {
            let inst = generate(&p, seed).unwrap();
            for (h, s) in all_cells() {
                let a = run_heuristic(&inst, h, s, seed);
                if let Ok(m) = &a {
                    let rep = check(&inst, m).unwrap();
                    assert!(rep.feasible, "{h}/{s}: {:?}", rep.violations);
                    if h == Heuristic::H1 {
                        assert!(m.reuse.is_empty());
                    }
                }
                assert_eq!(a, run_heuristic(&inst, h, s, seed));
            }
        }
    }

    #[test]
    fn single_ample_processor_takes_everything() {
        let p = GenParams { n_apps: 2, max_ops_per_app: 8, n_procs: 1, speed_range: (1e6, 1e6), nic_range: (1e6, 1e6), ..GenParams::default() };
        let inst = generate(&p, 3).unwrap();
        for (h, s) in all_cells() {
            let m = run_heuristic(&inst, h, s, 0).unwrap();
            assert!(m.assign.values().all(|&u| u == 0));
            let sets = build_comm_sets(&inst, &m).unwrap();
            assert_eq!(evaluate(&inst, &m, &sets).bw_sum, 0.0);
        }
    }

    #[test]
    fn reuse_lowers_power_on_identical_apps() {
        let p = GenParams { max_ops_per_app: 12, n_procs: 20, ..GenParams::default() };
        let inst = make_similar_pair(&p, 0, 11).unwrap();
        let power = |m: &Mapping| evaluate(&inst, m, &build_comm_sets(&inst, m).unwrap()).proc_power;
        let base = run_heuristic(&inst, Heuristic::H1, Strategy::S3, 5).unwrap();
        for h in &Heuristic::ALL[1..] {
            let m = run_heuristic(&inst, *h, Strategy::S3, 5).unwrap();
            assert!(!m.reuse.is_empty(), "{h}");
            assert!(power(&m) < power(&base) - 1e-12, "{h}");
        }
    }

    #[test]
    fn overloaded_instance_fails_everywhere() {
        let p = GenParams { n_apps: 2, max_ops_per_app: 10, n_procs: 3, speed_range: (0.1, 0.2), ..GenParams::default() };
        let inst = generate(&p, 0).unwrap();
        let work: f64 = inst.apps.iter().map(|a| a.throughput * a.nodes.values().map(|n| inst.operators[n.operator].comp).fold(0.0, f64::max)).sum();
        let speed: f64 = inst.platform.processors.iter().map(|q| q.speed).sum();
        assert!(work > speed);
        for (h, s) in all_cells() {
            assert!(run_heuristic(&inst, h, s, 1).is_err());
        }
    }

    #[test]
    fn fastest_first_picks_fastest() {
        let p = GenParams { n_apps: 1, max_ops_per_app: 1, n_procs: 3, ..GenParams::default() };
        let mut inst = generate(&p, 0).unwrap();
        for (q, s) in inst.platform.processors.iter_mut().zip([100.0, 180.0, 50.0]) {
            q.speed = s;
        }
        let r = Runner::new(&inst, Strategy::S1);
        assert_eq!(r.candidates(NodeRef::new(0, 1)), vec![1, 0, 2]);
        let mut r = Runner::new(&inst, Strategy::S1);
        r.st.chosen.insert(1);
        assert_eq!(r.candidates(NodeRef::new(0, 1))[0], 0);
    }

    #[test]
    fn remaining_compute_ties_go_to_lower_id() {
        let p = GenParams { n_apps: 1, max_ops_per_app: 1, n_procs: 2, homogeneous: true, ..GenParams::default() };
        let inst = generate(&p, 0).unwrap();
        let r = Runner::new(&inst, Strategy::S3);
        assert_eq!(r.candidates(NodeRef::new(0, 1)), vec![0, 1]);
    }
}
