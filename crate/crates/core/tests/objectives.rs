mod common;

use common::{assign, clique, pair_apps};
use opmap::feasibility::{build_comm_sets, resolve};
use opmap::generator::{generate, GenParams};
use opmap::heuristics::{run_heuristic, Heuristic, Strategy};
use opmap::model::{Instance, Mapping};
use opmap::objectives::{evaluate, CostVector, Objective};
use proptest::prelude::*;

fn cost(inst: &Instance, m: &Mapping) -> CostVector {
    evaluate(inst, m, &build_comm_sets(inst, m).unwrap())
}

#[test]
fn colocated_mapping_has_no_traffic() {
    let inst = pair_apps(&[1.0, 2.0], 1.0, 1.0, clique(&[10.0, 10.0], 5.0, 5.0, &[&[0], &[]]));
    let c = cost(&inst, &assign(&[((0, 1), 0), ((0, 2), 0), ((1, 1), 0), ((1, 2), 0)]));
    assert_eq!((c.proc_nb, c.bw_sum, c.bw_max), (1, 0.0, 0.0));
    assert_eq!(c.proc_power, 0.4);
}

#[test]
fn no_applications_cost_nothing() {
    let mut inst = pair_apps(&[1.0], 1.0, 1.0, clique(&[10.0], 5.0, 5.0, &[&[0]]));
    inst.apps.clear();
    assert_eq!(cost(&inst, &Mapping::default()), CostVector::default());
}

#[test]
fn objective_names_round_trip() {
    for o in [Objective::ProcNb, Objective::ProcPower, Objective::BwSum, Objective::BwMax] {
        assert_eq!(o.name().parse::<Objective>().unwrap(), o);
    }
    assert!("proc-speed".parse::<Objective>().is_err());
}

/// The same placement with every reuse replaced by explicit copies.
fn expand(inst: &Instance, m: &Mapping) -> Mapping {
    let pl = resolve(inst, m).unwrap();
    Mapping { assign: pl.proc_of.clone(), reuse: Default::default(), downloads: m.downloads.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reuse_never_adds_compute(seed in 0u64..5_000, h in 1usize..6, s in 0usize..4) {
        let p = GenParams { similarity: Some(0), ..GenParams::tiny(2, 6, 3, 3) };
        let inst = generate(&p, seed).unwrap();
        if let Ok(m) = run_heuristic(&inst, Heuristic::ALL[h], Strategy::ALL[s], seed) {
            let flat = expand(&inst, &m);
            let (a, b) = (cost(&inst, &m), cost(&inst, &flat));
            prop_assert!(a.proc_power <= b.proc_power + 1e-12);
        }
    }

    #[test]
    fn homogeneous_power_is_deduplicated_work(seed in 0u64..5_000) {
        let p = GenParams { homogeneous: true, ..GenParams::tiny(2, 5, 3, 3) };
        let inst = generate(&p, seed).unwrap();
        if let Ok(m) = run_heuristic(&inst, Heuristic::H3, Strategy::S3, seed) {
            let sets = build_comm_sets(&inst, &m).unwrap();
            let work: f64 = sets.ops.iter().flat_map(|ops| ops.iter().map(|(&q, &r)| r * inst.operators[q].comp)).sum();
            let s = inst.platform.speed(0);
            prop_assert!((cost(&inst, &m).proc_power - work / s).abs() <= 1e-12 * work.max(1.0));
        }
    }
}
