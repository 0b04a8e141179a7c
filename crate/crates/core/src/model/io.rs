use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub operators: Vec<OperatorEntry>,
    pub objects: Vec<ObjectEntry>,
    pub applications: Vec<ApplicationEntry>,
    pub platform: PlatformEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorEntry {
    pub id: OpId,
    pub comp: f64,
    pub out_size: f64,
    #[serde(default)]
    pub objects: Vec<ObjId>,
    #[serde(default)]
    pub operators: Vec<OpId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: ObjId,
    pub size: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplicationEntry {
    pub id: AppId,
    pub throughput: f64,
    pub nodes: Vec<NodeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub index: NodeIndex,
    pub operator: OpId,
    #[serde(default)]
    pub object_freqs: BTreeMap<ObjId, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformEntry {
    pub processors: Vec<ProcessorEntry>,
    pub links: Vec<LinkEntry>,
    #[serde(default)]
    pub holds: BTreeMap<ProcId, Vec<ObjId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessorEntry {
    pub id: ProcId,
    pub speed: f64,
    pub nic_bw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkEntry {
    pub u: ProcId,
    pub v: ProcId,
    pub bw: f64,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let p = &inst.platform;
        let mut links = Vec::new();
        for u in 0..p.len() {
            for v in u + 1..p.len() {
                links.push(LinkEntry { u, v, bw: p.link(u, v) });
            }
        }
        InstanceFile {
            operators: inst
                .operators
                .iter()
                .map(|o| OperatorEntry {
                    id: o.id,
                    comp: o.comp,
                    out_size: o.out_size,
                    objects: o.required_objects.clone(),
                    operators: o.required_operators.clone(),
                })
                .collect(),
            objects: inst.objects.iter().map(|o| ObjectEntry { id: o.id, size: o.size }).collect(),
            applications: inst
                .apps
                .iter()
                .map(|a| ApplicationEntry {
                    id: a.app_id,
                    throughput: a.throughput,
                    nodes: a
                        .nodes
                        .iter()
                        .map(|(&index, n)| NodeEntry {
                            index,
                            operator: n.operator,
                            object_freqs: n.object_freqs.clone(),
                        })
                        .collect(),
                })
                .collect(),
            platform: PlatformEntry {
                processors: p
                    .processors
                    .iter()
                    .map(|q| ProcessorEntry { id: q.id, speed: q.speed, nic_bw: q.nic_bw })
                    .collect(),
                links,
                holds: p
                    .holds
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| !h.is_empty())
                    .map(|(u, h)| (u, h.iter().copied().collect()))
                    .collect(),
            },
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = ModelError;

    fn try_from(f: InstanceFile) -> Result<Self, ModelError> {
        let n_procs = f.platform.processors.len();
        let mut holds = vec![BTreeSet::new(); n_procs];
        for (u, objs) in f.platform.holds {
            let slot = holds
                .get_mut(u)
                .ok_or_else(|| ModelError::Malformed(format!("holds references processor {u}")))?;
            slot.extend(objs);
        }
        let mut apps = Vec::with_capacity(f.applications.len());
        for a in f.applications {
            let mut nodes = BTreeMap::new();
            for n in a.nodes {
                let node = TreeNode { operator: n.operator, object_freqs: n.object_freqs };
                if nodes.insert(n.index, node).is_some() {
                    return Err(ModelError::Malformed(format!(
                        "application {} lists node {} twice",
                        a.id, n.index
                    )));
                }
            }
            apps.push(ApplicationTree { app_id: a.id, throughput: a.throughput, nodes });
        }
        Ok(Instance {
            operators: f
                .operators
                .into_iter()
                .map(|o| OperatorSpec {
                    id: o.id,
                    comp: o.comp,
                    out_size: o.out_size,
                    required_objects: o.objects,
                    required_operators: o.operators,
                })
                .collect(),
            objects: f.objects.into_iter().map(|o| ObjectSpec { id: o.id, size: o.size }).collect(),
            apps,
            platform: Platform::new(
                f.platform
                    .processors
                    .into_iter()
                    .map(|p| Processor { id: p.id, speed: p.speed, nic_bw: p.nic_bw })
                    .collect(),
                f.platform.links.into_iter().map(|l| (l.u, l.v, l.bw)),
                holds,
            ),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MappingFile {
    pub assignments: Vec<AssignmentEntry>,
    #[serde(default)]
    pub reuse: Vec<ReuseEntry>,
    #[serde(default)]
    pub downloads: Vec<DownloadEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub app: AppId,
    pub node: NodeIndex,
    pub processor: ProcId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReuseEntry {
    pub consumer: NodeRef,
    pub producer: NodeRef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownloadEntry {
    pub processor: ProcId,
    pub object: ObjId,
    pub source: ProcId,
}

impl From<&Mapping> for MappingFile {
    fn from(m: &Mapping) -> Self {
        MappingFile {
            assignments: m
                .assign
                .iter()
                .map(|(n, &u)| AssignmentEntry { app: n.app, node: n.node, processor: u })
                .collect(),
            reuse: m
                .reuse
                .iter()
                .map(|(&consumer, &producer)| ReuseEntry { consumer, producer })
                .collect(),
            downloads: m
                .downloads
                .iter()
                .map(|(&(processor, object), &source)| DownloadEntry { processor, object, source })
                .collect(),
        }
    }
}

impl From<MappingFile> for Mapping {
    fn from(f: MappingFile) -> Self {
        Mapping {
            assign: f
                .assignments
                .into_iter()
                .map(|a| (NodeRef::new(a.app, a.node), a.processor))
                .collect(),
            reuse: f.reuse.into_iter().map(|r| (r.consumer, r.producer)).collect(),
            downloads: f
                .downloads
                .into_iter()
                .map(|d| ((d.processor, d.object), d.source))
                .collect(),
        }
    }
}
