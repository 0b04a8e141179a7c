//! Applications, operators, objects, platforms and mappings.
//!
//! Tree nodes use heap indexing: the root is node 1 and the children of node
//! `i` are `2i` and `2i + 1`. An operator lists its required operators in a
//! fixed order; the child at `2i` computes `required_operators[0]` and the
//! child at `2i + 1` computes `required_operators[1]`. Two nodes computing the
//! same operator therefore root structurally identical subtrees.

mod io;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{InstanceFile, MappingFile};
pub use validate::{validate_instance, ValidationReport, Violation, ViolationKind};

pub type OpId = usize;
pub type ObjId = usize;
pub type ProcId = usize;
pub type AppId = usize;
pub type NodeIndex = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid node index {0}")]
    InvalidIndex(NodeIndex),
    #[error("application {app} does not use object {object}")]
    UnknownDownload { object: ObjId, app: AppId },
    #[error("empty application set")]
    EmptyAppSet,
    #[error("malformed instance: {0}")]
    Malformed(String),
}

/// Parent of a heap-indexed node; `None` for the root.
pub fn parent_index(i: NodeIndex) -> Result<Option<NodeIndex>, ModelError> {
    match i {
        0 => Err(ModelError::InvalidIndex(0)),
        1 => Ok(None),
        _ => Ok(Some(i / 2)),
    }
}

/// Depth of a heap index (root = 0).
pub fn depth_of(i: NodeIndex) -> u32 {
    debug_assert!(i >= 1);
    63 - i.leading_zeros()
}

/// True if `node` lies in the subtree rooted at `root` (inclusive).
pub fn in_subtree(root: NodeIndex, node: NodeIndex) -> bool {
    let (dr, dn) = (depth_of(root), depth_of(node));
    dn >= dr && (node >> (dn - dr)) == root
}

/// Index of the node at the same relative position under `to` as `node` has
/// under `from`. `node` must be in the subtree of `from`.
pub fn transpose(from: NodeIndex, to: NodeIndex, node: NodeIndex) -> NodeIndex {
    let d = depth_of(node) - depth_of(from);
    let rel = node & ((1u64 << d) - 1);
    (to << d) | rel
}

/// A node of one application tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(AppId, NodeIndex)", into = "(AppId, NodeIndex)")]
pub struct NodeRef {
    pub app: AppId,
    pub node: NodeIndex,
}

impl NodeRef {
    pub fn new(app: AppId, node: NodeIndex) -> Self {
        Self { app, node }
    }

    pub fn parent(self) -> Option<NodeRef> {
        (self.node > 1).then(|| NodeRef::new(self.app, self.node / 2))
    }
}

impl From<(AppId, NodeIndex)> for NodeRef {
    fn from((app, node): (AppId, NodeIndex)) -> Self {
        Self { app, node }
    }
}

impl From<NodeRef> for (AppId, NodeIndex) {
    fn from(n: NodeRef) -> Self {
        (n.app, n.node)
    }
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}^({})", self.node, self.app)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub id: OpId,
    /// MFlop per evaluation.
    pub comp: f64,
    /// MB per result.
    pub out_size: f64,
    pub required_objects: Vec<ObjId>,
    /// Ordered: position 0 is computed by the left child.
    pub required_operators: Vec<OpId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub id: ObjId,
    /// MB.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub operator: OpId,
    /// Update frequency (1/s) of every object the operator downloads.
    pub object_freqs: BTreeMap<ObjId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationTree {
    pub app_id: AppId,
    /// Results per second.
    pub throughput: f64,
    pub nodes: BTreeMap<NodeIndex, TreeNode>,
}

impl ApplicationTree {
    pub fn children(&self, i: NodeIndex) -> impl Iterator<Item = NodeIndex> + '_ {
        [2 * i, 2 * i + 1]
            .into_iter()
            .filter(move |c| i < (1 << 62) && self.nodes.contains_key(c))
    }

    /// Nodes of the subtree rooted at `root`, in increasing index order.
    pub fn subtree(&self, root: NodeIndex) -> Vec<NodeIndex> {
        let mut out = vec![root];
        let mut k = 0;
        while k < out.len() {
            let n = out[k];
            out.extend(self.children(n));
            k += 1;
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processor {
    pub id: ProcId,
    /// MIPS; 0 for pure data servers.
    pub speed: f64,
    /// MB/s.
    pub nic_bw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    pub processors: Vec<Processor>,
    /// Dense symmetric matrix, row-major, `len = P * P`. The diagonal is unused.
    link_bw: Vec<f64>,
    /// Objects held by each processor.
    pub holds: Vec<BTreeSet<ObjId>>,
}

impl Platform {
    /// `links` is read for every `u < v`; missing pairs are stored as NaN and
    /// reported by validation.
    pub fn new(
        processors: Vec<Processor>,
        links: impl IntoIterator<Item = (ProcId, ProcId, f64)>,
        holds: Vec<BTreeSet<ObjId>>,
    ) -> Self {
        let p = processors.len();
        let mut link_bw = vec![f64::NAN; p * p];
        for u in 0..p {
            link_bw[u * p + u] = 0.0;
        }
        for (u, v, bw) in links {
            if u < p && v < p && u != v {
                link_bw[u * p + v] = bw;
                link_bw[v * p + u] = bw;
            }
        }
        Self { processors, link_bw, holds }
    }

    pub fn len(&self) -> usize {
        self.processors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processors.is_empty()
    }

    pub fn link(&self, u: ProcId, v: ProcId) -> f64 {
        self.link_bw[u * self.len() + v]
    }

    pub fn speed(&self, u: ProcId) -> f64 {
        self.processors[u].speed
    }

    pub fn nic(&self, u: ProcId) -> f64 {
        self.processors[u].nic_bw
    }

    pub fn holds(&self, u: ProcId, j: ObjId) -> bool {
        self.holds.get(u).is_some_and(|h| h.contains(&j))
    }

    pub fn holders(&self, j: ObjId) -> impl Iterator<Item = ProcId> + '_ {
        (0..self.len()).filter(move |&u| self.holds(u, j))
    }

    /// Multiplies every speed, network card and link bandwidth by `c`.
    pub fn scaled(&self, c: f64) -> Platform {
        let mut out = self.clone();
        for p in &mut out.processors {
            p.speed *= c;
            p.nic_bw *= c;
        }
        for bw in &mut out.link_bw {
            *bw *= c;
        }
        out
    }

    pub fn is_homogeneous(&self) -> bool {
        let p = self.len();
        let Some(first) = self.processors.first() else {
            return true;
        };
        let l0 = if p > 1 { self.link(0, 1) } else { 0.0 };
        self.processors.iter().all(|q| q.speed == first.speed && q.nic_bw == first.nic_bw)
            && (0..p).all(|u| (0..p).all(|v| u == v || self.link(u, v) == l0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub operators: Vec<OperatorSpec>,
    pub objects: Vec<ObjectSpec>,
    pub apps: Vec<ApplicationTree>,
    pub platform: Platform,
}

impl Instance {
    pub fn op(&self, n: NodeRef) -> &OperatorSpec {
        &self.operators[self.apps[n.app].nodes[&n.node].operator]
    }

    pub fn op_id(&self, n: NodeRef) -> OpId {
        self.apps[n.app].nodes[&n.node].operator
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        self.apps.get(n.app).is_some_and(|a| a.nodes.contains_key(&n.node))
    }

    pub fn rho(&self, app: AppId) -> f64 {
        self.apps[app].throughput
    }

    /// Every node of every tree in (app, index) order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.apps
            .iter()
            .enumerate()
            .flat_map(|(k, a)| a.nodes.keys().map(move |&i| NodeRef::new(k, i)))
    }

    pub fn node_count(&self) -> usize {
        self.apps.iter().map(|a| a.nodes.len()).sum()
    }

    pub fn children(&self, n: NodeRef) -> impl Iterator<Item = NodeRef> + '_ {
        self.apps[n.app].children(n.node).map(move |c| NodeRef::new(n.app, c))
    }

    /// `size_j * f_j^(k)` in MB/s.
    pub fn download_rate(&self, j: ObjId, k: AppId) -> Result<f64, ModelError> {
        let unknown = ModelError::UnknownDownload { object: j, app: k };
        let app = self.apps.get(k).ok_or(unknown.clone())?;
        let size = self.objects.get(j).ok_or(unknown.clone())?.size;
        app.nodes
            .values()
            .filter_map(|n| n.object_freqs.get(&j))
            .copied()
            .reduce(f64::max)
            .map(|f| size * f)
            .ok_or(unknown)
    }

    /// Rate needed by the node `n` for object `j`.
    pub fn node_download_rate(&self, n: NodeRef, j: ObjId) -> f64 {
        let f = self.apps[n.app].nodes[&n.node].object_freqs.get(&j).copied().unwrap_or(0.0);
        self.objects[j].size * f
    }

    pub fn with_platform(&self, platform: Platform) -> Instance {
        Instance { platform, ..self.clone() }
    }

    /// Multiplies every application throughput by `c`.
    pub fn with_scaled_throughput(&self, c: f64) -> Instance {
        let mut out = self.clone();
        for a in &mut out.apps {
            a.throughput *= c;
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Instance, ModelError> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        Instance::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }
}

/// Rate at which a processor downloads an object that several applications
/// need: the object is fetched once, at the largest requested rate.
pub fn effective_download_rate(rates: &[f64]) -> Result<f64, ModelError> {
    rates.iter().copied().reduce(f64::max).ok_or(ModelError::EmptyAppSet)
}

/// Node placement, result reuse and download sources.
///
/// Every node is either assigned, the consumer of a reuse link, or covered
/// (a strict descendant of a consumer). A consumer's subtree is not computed;
/// its result is streamed from the producer to the consumer's parent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mapping {
    pub assign: BTreeMap<NodeRef, ProcId>,
    /// consumer → producer
    pub reuse: BTreeMap<NodeRef, NodeRef>,
    /// (downloading processor, object) → source processor
    pub downloads: BTreeMap<(ProcId, ObjId), ProcId>,
}

impl Mapping {
    pub fn from_json(text: &str) -> Result<Mapping, ModelError> {
        let file: MappingFile =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        Ok(Mapping::from(file))
    }

    pub fn to_file(&self) -> MappingFile {
        MappingFile::from(self)
    }

    /// Processors with at least one assigned node.
    pub fn used_processors(&self) -> BTreeSet<ProcId> {
        self.assign.values().copied().collect()
    }
}
