mod common;

use std::collections::BTreeMap;

use common::{clique, pair_apps, tiny_instance};
use opmap::feasibility::check;
use opmap::generator::{generate, GenParams};
use opmap::heuristics::{run_heuristic, run_heuristic_with, Heuristic, HeuristicOptions, Strategy};
use opmap::model::{ApplicationTree, Instance, Mapping, ObjectSpec, OperatorSpec, ProcId, TreeNode};
use proptest::prelude::*;

fn cells() -> impl Iterator<Item = (Heuristic, Strategy)> {
    Heuristic::ALL.into_iter().flat_map(|h| Strategy::ALL.into_iter().map(move |s| (h, s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn results_are_sound_and_deterministic(seed in 0u64..100_000) {
        let inst = tiny_instance(seed);
        for (h, s) in cells() {
            let a = run_heuristic(&inst, h, s, seed);
            if let Ok(m) = &a {
                prop_assert!(check(&inst, m).unwrap().feasible);
            }
            prop_assert_eq!(a, run_heuristic(&inst, h, s, seed));
        }
    }
}

#[test]
fn only_reusing_heuristics_emit_reuse() {
    // Two identical applications on roomy processors.
    let inst = pair_apps(&[1.0, 1.5], 1.0, 1.0, clique(&[10.0, 8.0, 6.0], 50.0, 50.0, &[&[0], &[0], &[0]]));
    for (h, s) in cells() {
        let m = run_heuristic(&inst, h, s, 1).unwrap();
        assert_eq!(m.reuse.is_empty(), h == Heuristic::H1, "{h:?}/{s:?}");
    }
}

/// Chain `op2(op1(op0(ob0)))` where each processor fits exactly one node.
fn one_node_per_processor(speeds: &[f64], nics: &[f64]) -> Instance {
    let ops = vec![
        OperatorSpec { id: 0, comp: 6.0, out_size: 0.1, required_objects: vec![0], required_operators: vec![] },
        OperatorSpec { id: 1, comp: 6.0, out_size: 0.1, required_objects: vec![], required_operators: vec![0] },
        OperatorSpec { id: 2, comp: 6.0, out_size: 0.1, required_objects: vec![], required_operators: vec![1] },
    ];
    let app = ApplicationTree {
        app_id: 0,
        throughput: 1.0,
        nodes: BTreeMap::from([
            (1, TreeNode { operator: 2, object_freqs: BTreeMap::new() }),
            (2, TreeNode { operator: 1, object_freqs: BTreeMap::new() }),
            (4, TreeNode { operator: 0, object_freqs: BTreeMap::from([(0, 0.1)]) }),
        ]),
    };
    let holds: Vec<&[usize]> = vec![&[0]; speeds.len()];
    let mut platform = clique(speeds, 100.0, 100.0, &holds);
    for (p, &nic) in platform.processors.iter_mut().zip(nics) {
        p.nic_bw = nic;
    }
    Instance { operators: ops, objects: vec![ObjectSpec { id: 0, size: 1.0 }], apps: vec![app], platform }
}

fn first_use_order(m: &Mapping) -> Vec<ProcId> {
    let mut order = Vec::new();
    for (_, &u) in &m.assign {
        if !order.contains(&u) {
            order.push(u);
        }
    }
    order
}

#[test]
fn blocking_strategies_enrol_in_decreasing_order() {
    let inst = one_node_per_processor(&[7.0, 10.0, 8.0, 9.0], &[100.0; 4]);
    for h in [Heuristic::H3, Heuristic::H4] {
        let m = run_heuristic(&inst, h, Strategy::S1, 0).unwrap();
        assert_eq!(first_use_order(&m), vec![1, 3, 2], "{h:?}");
    }
    let inst = one_node_per_processor(&[9.0; 4], &[60.0, 90.0, 70.0, 80.0]);
    for h in [Heuristic::H3, Heuristic::H4] {
        let m = run_heuristic(&inst, h, Strategy::S2, 0).unwrap();
        assert_eq!(first_use_order(&m), vec![1, 3, 2], "{h:?}");
    }
}

#[test]
fn blocking_excludes_unrelated_operators() {
    // Two single-node applications with unrelated operators; the fastest
    // processor could host both.
    let leaf = |id| OperatorSpec { id, comp: 1.0, out_size: 1.0, required_objects: vec![0], required_operators: vec![] };
    let app = |k, op| ApplicationTree {
        app_id: k,
        throughput: 1.0,
        nodes: BTreeMap::from([(1, TreeNode { operator: op, object_freqs: BTreeMap::from([(0, 0.1)]) })]),
    };
    let inst = Instance {
        operators: vec![leaf(0), leaf(1)],
        objects: vec![ObjectSpec { id: 0, size: 1.0 }],
        apps: vec![app(0, 0), app(1, 1)],
        platform: clique(&[5.0, 20.0, 10.0], 100.0, 100.0, &[&[0], &[0], &[0]]),
    };
    let m = run_heuristic(&inst, Heuristic::H3, Strategy::S1, 0).unwrap();
    assert_eq!(m.assign.values().copied().collect::<Vec<_>>(), vec![1, 2]);
    let m = run_heuristic(&inst, Heuristic::H3, Strategy::S3, 0).unwrap();
    assert_eq!(m.assign.values().copied().collect::<Vec<_>>(), vec![1, 1]);
}

fn similar(seed: u64) -> Instance {
    generate(&GenParams { similarity: Some(0), ..GenParams::tiny(2, 6, 3, 3) }, seed).unwrap()
}

fn solved(inst: &Instance, h: Heuristic, s: Strategy, seed: u64, reuse: bool) -> bool {
    run_heuristic_with(inst, h, s, seed, HeuristicOptions { reuse }).is_ok()
}

#[test]
fn reuse_wins_far_more_runs_than_it_loses() {
    let (mut gained, mut lost) = (0, 0);
    for seed in 0..200 {
        let inst = similar(seed);
        for (h, s) in cells().filter(|&(h, _)| h != Heuristic::H1) {
            match (solved(&inst, h, s, seed, true), solved(&inst, h, s, seed, false)) {
                (true, false) => gained += 1,
                (false, true) => lost += 1,
                _ => {}
            }
        }
    }
    assert!(gained > 10 * lost, "gained {gained}, lost {lost}");
}

#[test]
fn early_root_reuse_can_lose_a_run() {
    // Reusing the second root commits its whole tree to the first tree's
    // processors at the larger throughput; recomputing it elsewhere fits.
    let inst = similar(246);
    assert!(!solved(&inst, Heuristic::H3, Strategy::S3, 246, true));
    assert!(solved(&inst, Heuristic::H3, Strategy::S3, 246, false));
}
