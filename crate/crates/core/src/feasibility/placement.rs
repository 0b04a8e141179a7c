use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{transpose, Instance, Mapping, NodeRef, ObjId, ProcId};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MappingError {
    #[error("node {0} is neither assigned nor satisfied by reuse")]
    Incomplete(NodeRef),
    #[error("mapping references unknown node {0}")]
    UnknownNode(NodeRef),
    #[error("node {node} assigned to unknown processor {proc}")]
    UnknownProcessor { node: NodeRef, proc: ProcId },
    #[error("reuse {consumer} <- {producer}: operators differ")]
    ReuseOperatorMismatch { consumer: NodeRef, producer: NodeRef },
    #[error("reuse producer {0} is not an assigned node")]
    ProducerNotAssigned(NodeRef),
    #[error("node {0} is assigned but lies in a reused subtree")]
    AssignedInsideReuse(NodeRef),
    #[error("reuse consumer {0} lies inside another reused subtree")]
    ConsumerInsideReuse(NodeRef),
    #[error("reuse resolution does not terminate at {0}")]
    Unresolvable(NodeRef),
    #[error("processor {proc} downloads object {object} from {holder}, which does not hold it")]
    BadDownloadSource { proc: ProcId, object: ObjId, holder: ProcId },
    #[error("processor {proc} needs object {object} but no download source is given")]
    MissingDownload { proc: ProcId, object: ObjId },
    #[error("download of object {object} by processor {proc} is not needed")]
    SuperfluousDownload { proc: ProcId, object: ObjId },
}

impl MappingError {
    /// Incomplete mappings are distinguished from structurally invalid ones.
    pub fn is_incomplete(&self) -> bool {
        matches!(self, MappingError::Incomplete(_))
    }
}

/// Every tree node resolved to the processor where its result is available.
///
/// A node covered by reuse resolves to the processor of the node at the same
/// relative position under the producer; resolution is repeated until an
/// assigned node is reached. Covered subtrees therefore behave exactly like
/// copies placed next to the producer's subtree, and dedup at equal
/// (processor, operator) pairs charges them only through raised rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub proc_of: BTreeMap<NodeRef, ProcId>,
}

impl Placement {
    pub fn get(&self, n: NodeRef) -> ProcId {
        self.proc_of[&n]
    }

    /// Download pairs (processor, object) implied by the placement, excluding
    /// local accesses.
    pub fn needed_downloads(&self, inst: &Instance) -> BTreeSet<(ProcId, ObjId)> {
        let mut out = BTreeSet::new();
        for (&n, &u) in &self.proc_of {
            for &j in &inst.op(n).required_objects {
                if !inst.platform.holds(u, j) {
                    out.insert((u, j));
                }
            }
        }
        out
    }
}

/// Validates the mapping's structure and expands it into a [`Placement`].
pub fn resolve(inst: &Instance, m: &Mapping) -> Result<Placement, MappingError> {
    let n_procs = inst.platform.len();
    for (&n, &u) in &m.assign {
        if !inst.contains(n) {
            return Err(MappingError::UnknownNode(n));
        }
        if u >= n_procs {
            return Err(MappingError::UnknownProcessor { node: n, proc: u });
        }
    }
    for (&c, &q) in &m.reuse {
        for n in [c, q] {
            if !inst.contains(n) {
                return Err(MappingError::UnknownNode(n));
            }
        }
        if inst.op_id(c) != inst.op_id(q) {
            return Err(MappingError::ReuseOperatorMismatch { consumer: c, producer: q });
        }
        if !m.assign.contains_key(&q) {
            return Err(MappingError::ProducerNotAssigned(q));
        }
        if ancestors(c).any(|a| m.reuse.contains_key(&a)) {
            return Err(MappingError::ConsumerInsideReuse(c));
        }
    }

    let mut proc_of = BTreeMap::new();
    let limit = inst.node_count() + 1;
    for n in inst.nodes() {
        let cover = covering_consumer(m, n);
        if cover.is_some() && m.assign.contains_key(&n) {
            return Err(MappingError::AssignedInsideReuse(n));
        }
        let mut cur = n;
        let mut hops = 0;
        let u = loop {
            match covering_consumer(m, cur) {
                None => match m.assign.get(&cur) {
                    Some(&u) => break u,
                    None => return Err(MappingError::Incomplete(cur)),
                },
                Some(c) => {
                    let q = m.reuse[&c];
                    cur = NodeRef::new(q.app, transpose(c.node, q.node, cur.node));
                    if !inst.contains(cur) {
                        return Err(MappingError::Unresolvable(n));
                    }
                }
            }
            hops += 1;
            if hops > limit {
                return Err(MappingError::Unresolvable(n));
            }
        };
        proc_of.insert(n, u);
    }
    let placement = Placement { proc_of };

    let needed = placement.needed_downloads(inst);
    for &(u, j) in &needed {
        match m.downloads.get(&(u, j)) {
            None => return Err(MappingError::MissingDownload { proc: u, object: j }),
            Some(&v) if v >= n_procs || !inst.platform.holds(v, j) => {
                return Err(MappingError::BadDownloadSource { proc: u, object: j, holder: v })
            }
            Some(_) => {}
        }
    }
    for (&(u, j), &v) in &m.downloads {
        if needed.contains(&(u, j)) {
            continue;
        }
        // Local access entries for holders are tolerated.
        if !(u == v && u < n_procs && inst.platform.holds(u, j)) {
            return Err(MappingError::SuperfluousDownload { proc: u, object: j });
        }
    }
    Ok(placement)
}

fn ancestors(n: NodeRef) -> impl Iterator<Item = NodeRef> {
    std::iter::successors(n.parent(), |a| a.parent())
}

/// Nearest ancestor-or-self of `n` that is a reuse consumer.
fn covering_consumer(m: &Mapping, n: NodeRef) -> Option<NodeRef> {
    if m.reuse.is_empty() {
        return None;
    }
    std::iter::once(n).chain(ancestors(n)).find(|a| m.reuse.contains_key(a))
}

/// True if `n` is a strict descendant of a reuse consumer.
pub fn is_covered(m: &Mapping, n: NodeRef) -> bool {
    ancestors(n).any(|a| m.reuse.contains_key(&a))
}
