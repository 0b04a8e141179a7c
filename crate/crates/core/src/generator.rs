//! Seeded random instances.
//!
//! Operators are hash-consed: two tree nodes get the same operator exactly
//! when they require the same objects and the same child operators. Sharing
//! between applications (and therefore reuse opportunities) comes from this
//! identity.
//!
//! A single ChaCha stream is consumed in this order: object sizes; processor
//! speeds and network cards; link bandwidths (`u < v`); one holder per object;
//! then per application its throughput, its tree (shape decisions and object
//! draws breadth-first, then new operators' `comp`/`out_size` in post-order),
//! and finally one frequency per object it uses, in object order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::*;

const P_TWO_CHILDREN: f64 = 0.45;
const P_ONE_CHILD: f64 = 0.35;
const MAX_DEPTH: u32 = 60;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("unsatisfiable request: {0}")]
    Unsatisfiable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_apps: usize,
    pub max_ops_per_app: usize,
    pub n_object_types: usize,
    pub obj_size_range: (f64, f64),
    /// Sampled on the half-open interval `(lo, hi]`.
    pub freq_range: (f64, f64),
    pub throughput_range: (f64, f64),
    pub comp_range: (f64, f64),
    pub out_size_range: (f64, f64),
    pub n_procs: usize,
    pub nic_range: (f64, f64),
    pub speed_range: (f64, f64),
    pub link_range: (f64, f64),
    pub ccr: Option<f64>,
    pub similarity: Option<usize>,
    pub homogeneous: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_apps: 5,
            max_ops_per_app: 50,
            n_object_types: 10,
            obj_size_range: (3.0, 13.0),
            freq_range: (0.0, 1.0),
            throughput_range: (1.0, 2.0),
            comp_range: (0.5, 1.5),
            out_size_range: (0.5, 1.5),
            n_procs: 30,
            nic_range: (50.0, 180.0),
            speed_range: (50.0, 180.0),
            link_range: (60.0, 100.0),
            ccr: None,
            similarity: None,
            homogeneous: false,
        }
    }
}

impl GenParams {
    /// Small, tightly provisioned instances that exhaustive search can handle.
    pub fn tiny(n_apps: usize, max_ops: usize, n_procs: usize, n_objects: usize) -> Self {
        GenParams {
            n_apps,
            max_ops_per_app: max_ops,
            n_object_types: n_objects,
            n_procs,
            speed_range: (1.0, 4.0),
            nic_range: (5.0, 30.0),
            link_range: (5.0, 20.0),
            ..GenParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidParams(m.to_string()));
        if self.n_apps == 0 || self.max_ops_per_app == 0 || self.n_object_types == 0 || self.n_procs == 0 {
            return bad("counts must be >= 1");
        }
        let ranges = [
            ("obj_size_range", self.obj_size_range, true),
            ("freq_range", self.freq_range, true),
            ("throughput_range", self.throughput_range, true),
            ("comp_range", self.comp_range, false),
            ("out_size_range", self.out_size_range, false),
            ("nic_range", self.nic_range, false),
            ("speed_range", self.speed_range, false),
            ("link_range", self.link_range, true),
        ];
        for (name, (lo, hi), positive) in ranges {
            if !(lo <= hi) || lo < 0.0 || (positive && hi <= 0.0) {
                return bad(&format!("{name} must be a nonempty nonnegative interval"));
            }
        }
        if (self.obj_size_range.0 <= 0.0) || self.throughput_range.0 <= 0.0 || self.link_range.0 <= 0.0 {
            return bad("sizes, throughputs and link bandwidths must be positive");
        }
        if let Some(c) = self.ccr {
            if !(c > 0.0) {
                return bad("ccr must be positive");
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + rng.gen::<f64>() * (hi - lo)
}

fn uniform_open_low(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    hi - rng.gen::<f64>() * (hi - lo)
}

#[derive(Debug, Clone)]
enum Shape {
    Two,
    OneWithObject(ObjId),
    Leaf(Vec<ObjId>),
}

struct ShapeNode {
    shape: Shape,
    children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct OpKey {
    operators: Vec<OpId>,
    objects: Vec<ObjId>,
}

struct Builder<'a> {
    params: &'a GenParams,
    rng: ChaCha8Rng,
    operators: Vec<OperatorSpec>,
    interned: BTreeMap<OpKey, OpId>,
}

impl Builder<'_> {
    fn new_operator(&mut self, required_operators: Vec<OpId>, required_objects: Vec<ObjId>) -> OpId {
        let id = self.operators.len();
        let comp = uniform(&mut self.rng, self.params.comp_range);
        let out_size = uniform(&mut self.rng, self.params.out_size_range);
        self.operators.push(OperatorSpec { id, comp, out_size, required_objects, required_operators });
        id
    }

    fn interned_operator(&mut self, mut kids: Vec<OpId>, mut objs: Vec<ObjId>) -> OpId {
        kids.sort_unstable();
        objs.sort_unstable();
        objs.dedup();
        let key = OpKey { operators: kids.clone(), objects: objs.clone() };
        if let Some(&id) = self.interned.get(&key) {
            return id;
        }
        let id = self.new_operator(kids, objs);
        self.interned.insert(key, id);
        id
    }

    fn grow_shape(&mut self) -> Vec<ShapeNode> {
        let max = self.params.max_ops_per_app;
        let n_obj = self.params.n_object_types;
        let mut nodes: Vec<ShapeNode> = Vec::new();
        let mut queue = VecDeque::from([(0usize, 0u32)]);
        nodes.push(ShapeNode { shape: Shape::Two, children: vec![] });
        while let Some((id, depth)) = queue.pop_front() {
            let remaining = max - nodes.len();
            let r: f64 = self.rng.gen();
            let mut want = if r < P_TWO_CHILDREN {
                2
            } else if r < P_TWO_CHILDREN + P_ONE_CHILD {
                1
            } else {
                0
            };
            if depth >= MAX_DEPTH {
                want = 0;
            }
            want = want.min(remaining);
            let shape = match want {
                2 => Shape::Two,
                1 => Shape::OneWithObject(self.rng.gen_range(0..n_obj)),
                _ => {
                    let a = self.rng.gen_range(0..n_obj);
                    let b = self.rng.gen_range(0..n_obj);
                    Shape::Leaf(vec![a, b])
                }
            };
            for _ in 0..want {
                let child = nodes.len();
                nodes.push(ShapeNode { shape: Shape::Two, children: vec![] });
                nodes[id].children.push(child);
                queue.push_back((child, depth + 1));
            }
            nodes[id].shape = shape;
        }
        nodes
    }

    /// Assigns operators bottom-up and lays the tree out with heap indices.
    fn tree_from_shape(&mut self, shape: &[ShapeNode]) -> BTreeMap<NodeIndex, OpId> {
        let mut op_of = vec![usize::MAX; shape.len()];
        for id in post_order(shape) {
            let kids: Vec<OpId> = shape[id].children.iter().map(|&c| op_of[c]).collect();
            op_of[id] = match &shape[id].shape {
                Shape::Two | Shape::OneWithObject(_) if kids.is_empty() => unreachable!(),
                Shape::Two => self.interned_operator(kids, vec![]),
                Shape::OneWithObject(j) => self.interned_operator(kids, vec![*j]),
                Shape::Leaf(objs) => self.interned_operator(vec![], objs.clone()),
            };
        }
        let mut out = BTreeMap::new();
        let mut stack = vec![(0usize, 1u64)];
        while let Some((id, index)) = stack.pop() {
            let op = op_of[id];
            out.insert(index, op);
            let required = &self.operators[op].required_operators;
            let mut pending: Vec<usize> = shape[id].children.clone();
            for (slot, &want) in required.iter().enumerate() {
                let pos = pending.iter().position(|&c| op_of[c] == want).expect("child operator present");
                let c = pending.remove(pos);
                stack.push((c, 2 * index + slot as u64));
            }
        }
        out
    }

    fn freqs_for(&mut self, tree: &BTreeMap<NodeIndex, OpId>) -> BTreeMap<ObjId, f64> {
        let used: BTreeSet<ObjId> = tree
            .values()
            .flat_map(|&op| self.operators[op].required_objects.iter().copied())
            .collect();
        used.into_iter().map(|j| (j, uniform_open_low(&mut self.rng, self.params.freq_range))).collect()
    }
}

fn post_order(shape: &[ShapeNode]) -> Vec<usize> {
    let mut out = Vec::with_capacity(shape.len());
    let mut stack = vec![(0usize, false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            out.push(id);
        } else {
            stack.push((id, true));
            for &c in shape[id].children.iter().rev() {
                stack.push((c, false));
            }
        }
    }
    out
}

fn make_app(
    operators: &[OperatorSpec],
    app_id: AppId,
    throughput: f64,
    tree: &BTreeMap<NodeIndex, OpId>,
    freqs: &BTreeMap<ObjId, f64>,
) -> ApplicationTree {
    let nodes = tree
        .iter()
        .map(|(&i, &op)| {
            let object_freqs =
                operators[op].required_objects.iter().map(|&j| (j, freqs[&j])).collect();
            (i, TreeNode { operator: op, object_freqs })
        })
        .collect();
    ApplicationTree { app_id, throughput, nodes }
}

/// Generates a valid instance; a pure function of `(params, seed)`.
pub fn generate(params: &GenParams, seed: u64) -> Result<Instance, GenError> {
    params.validate()?;
    let mut b = Builder {
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        operators: Vec::new(),
        interned: BTreeMap::new(),
    };

    let objects: Vec<ObjectSpec> = (0..params.n_object_types)
        .map(|id| ObjectSpec { id, size: uniform(&mut b.rng, params.obj_size_range) })
        .collect();

    let n = params.n_procs;
    let processors: Vec<Processor> = if params.homogeneous {
        let speed = uniform(&mut b.rng, params.speed_range);
        let nic_bw = uniform(&mut b.rng, params.nic_range);
        (0..n).map(|id| Processor { id, speed, nic_bw }).collect()
    } else {
        (0..n)
            .map(|id| {
                let speed = uniform(&mut b.rng, params.speed_range);
                let nic_bw = uniform(&mut b.rng, params.nic_range);
                Processor { id, speed, nic_bw }
            })
            .collect()
    };
    let mut links = Vec::new();
    let shared_link = params.homogeneous.then(|| uniform(&mut b.rng, params.link_range));
    for u in 0..n {
        for v in u + 1..n {
            let bw = shared_link.unwrap_or_else(|| uniform(&mut b.rng, params.link_range));
            links.push((u, v, bw));
        }
    }
    let mut holds = vec![BTreeSet::new(); n];
    for j in 0..params.n_object_types {
        holds[b.rng.gen_range(0..n)].insert(j);
    }

    let mut apps = Vec::with_capacity(params.n_apps);
    let base_rho = uniform(&mut b.rng, params.throughput_range);
    let shape = b.grow_shape();
    let base_tree = b.tree_from_shape(&shape);
    let base_freqs = b.freqs_for(&base_tree);
    apps.push(make_app(&b.operators, 0, base_rho, &base_tree, &base_freqs));

    for k in 1..params.n_apps {
        let rho = uniform(&mut b.rng, params.throughput_range);
        let tree = match params.similarity {
            None => {
                let shape = b.grow_shape();
                b.tree_from_shape(&shape)
            }
            Some(n_diff) => variant_tree(&mut b, &base_tree, n_diff)?,
        };
        let freqs = b.freqs_for(&tree);
        apps.push(make_app(&b.operators, k, rho, &tree, &freqs));
    }

    let mut operators = b.operators;
    if let Some(ccr) = params.ccr {
        let mean_w = operators.iter().map(|o| o.comp).sum::<f64>() / operators.len() as f64;
        let mean_d = operators.iter().map(|o| o.out_size).sum::<f64>() / operators.len() as f64;
        if mean_d > 0.0 {
            let factor = ccr * mean_w / mean_d;
            for o in &mut operators {
                o.out_size *= factor;
            }
        }
    }

    Ok(Instance { operators, objects, apps, platform: Platform::new(processors, links, holds) })
}

/// Copy of `base` in which exactly `n_diff` nodes, forming a random
/// ancestor-closed set, compute fresh operators.
fn variant_tree(
    b: &mut Builder<'_>,
    base: &BTreeMap<NodeIndex, OpId>,
    n_diff: usize,
) -> Result<BTreeMap<NodeIndex, OpId>, GenError> {
    if n_diff > base.len() {
        return Err(GenError::Unsatisfiable(format!(
            "{n_diff} differing operators requested for a tree of {} operators",
            base.len()
        )));
    }
    let mut chosen = BTreeSet::new();
    let mut frontier: BTreeSet<NodeIndex> = BTreeSet::new();
    if n_diff > 0 {
        frontier.insert(1);
    }
    while chosen.len() < n_diff {
        let pick = *frontier.iter().nth(b.rng.gen_range(0..frontier.len())).expect("frontier nonempty");
        frontier.remove(&pick);
        chosen.insert(pick);
        for c in [2 * pick, 2 * pick + 1] {
            if base.contains_key(&c) {
                frontier.insert(c);
            }
        }
    }
    let mut tree = base.clone();
    for &i in chosen.iter().rev() {
        let old = &b.operators[base[&i]];
        let objs = old.required_objects.clone();
        let kids: Vec<OpId> = [2 * i, 2 * i + 1].iter().filter_map(|c| tree.get(c).copied()).collect();
        let fresh = b.new_operator(kids, objs);
        tree.insert(i, fresh);
    }
    Ok(tree)
}

/// Two applications; the second differs from the first in exactly `n_diff`
/// node operators.
pub fn make_similar_pair(params: &GenParams, n_diff: usize, seed: u64) -> Result<Instance, GenError> {
    let p = GenParams { n_apps: 2, similarity: Some(n_diff), ..params.clone() };
    generate(&p, seed)
}
