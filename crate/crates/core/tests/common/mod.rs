#![allow(dead_code)]

use std::path::PathBuf;

use opmap::generator::{generate, GenParams};
use opmap::heuristics::{run_heuristic, Heuristic, Strategy};
use opmap::model::{Instance, Mapping};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fig1() -> (Instance, Mapping) {
    let inst = Instance::from_json(&fixture("fig1.json")).unwrap();
    let m = Mapping::from_json(&fixture("fig1_mapping.json")).unwrap();
    (inst, m)
}

pub fn tiny() -> Instance {
    Instance::from_json(&fixture("tiny.json")).unwrap()
}

/// Bounds: at most 2 applications, 4 nodes each, 4 processors, 3 objects.
pub fn tiny_instance(seed: u64) -> Instance {
    let apps = 1 + (seed % 2) as usize;
    let procs = 2 + (seed / 2 % 3) as usize;
    let objects = 1 + (seed / 6 % 3) as usize;
    generate(&GenParams::tiny(apps, 4, procs, objects), seed).expect("tiny parameters are valid")
}

/// First feasible mapping any heuristic cell finds, if one does.
pub fn some_feasible(inst: &Instance, seed: u64) -> Option<Mapping> {
    Heuristic::ALL
        .iter()
        .flat_map(|&h| Strategy::ALL.iter().map(move |&s| (h, s)))
        .find_map(|(h, s)| run_heuristic(inst, h, s, seed).ok())
}

use std::collections::{BTreeMap, BTreeSet};

use opmap::model::{ApplicationTree, NodeRef, ObjectSpec, OperatorSpec, Platform, Processor, TreeNode};

/// Clique of `speeds.len()` processors with uniform NIC and link bandwidth.
pub fn clique(speeds: &[f64], nic: f64, link: f64, holds: &[&[usize]]) -> Platform {
    let p = speeds.len();
    let procs = speeds.iter().enumerate().map(|(id, &speed)| Processor { id, speed, nic_bw: nic }).collect();
    let links = (0..p).flat_map(|u| (u + 1..p).map(move |v| (u, v, link)));
    Platform::new(procs, links, holds.iter().map(|h| h.iter().copied().collect::<BTreeSet<_>>()).collect())
}

/// Applications shaped `op1(op0(ob0))`, one per throughput, sharing both
/// operators; `w` and `delta` apply to both operators.
pub fn pair_apps(rhos: &[f64], w: f64, delta: f64, platform: Platform) -> Instance {
    let ops = vec![
        OperatorSpec { id: 0, comp: w, out_size: delta, required_objects: vec![0], required_operators: vec![] },
        OperatorSpec { id: 1, comp: w, out_size: delta, required_objects: vec![], required_operators: vec![0] },
    ];
    let apps = rhos
        .iter()
        .enumerate()
        .map(|(k, &rho)| ApplicationTree {
            app_id: k,
            throughput: rho,
            nodes: BTreeMap::from([
                (1, TreeNode { operator: 1, object_freqs: BTreeMap::new() }),
                (2, TreeNode { operator: 0, object_freqs: BTreeMap::from([(0, 1.0)]) }),
            ]),
        })
        .collect();
    Instance { operators: ops, objects: vec![ObjectSpec { id: 0, size: 1.0 }], apps, platform }
}

pub fn assign(pairs: &[((usize, u64), usize)]) -> Mapping {
    let mut m = Mapping::default();
    for &((k, i), u) in pairs {
        m.assign.insert(NodeRef::new(k, i), u);
    }
    m
}
