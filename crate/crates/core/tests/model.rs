mod common;

use common::{fig1, tiny_instance};
use opmap::model::{validate_instance, Instance, ViolationKind};
use proptest::prelude::*;

#[test]
fn fig1_fixture_is_valid() {
    let (inst, _) = fig1();
    let r = validate_instance(&inst);
    assert!(r.is_ok(), "{:?}", r.violations);
    assert_eq!(inst.apps.len(), 2);
}

#[test]
fn arity_violation() {
    let (mut inst, _) = fig1();
    // op index 1 already has one object and one operator.
    inst.operators[1].required_objects.push(2);
    assert!(validate_instance(&inst).has(ViolationKind::BinaryArity));
}

#[test]
fn unplaced_object() {
    let (mut inst, _) = fig1();
    let procs = inst.platform.processors.clone();
    let links: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
    let links: Vec<_> = links.into_iter().map(|(u, v)| (u, v, inst.platform.link(u, v))).collect();
    let mut holds = inst.platform.holds.clone();
    for h in &mut holds {
        h.remove(&1);
    }
    inst.platform = opmap::model::Platform::new(procs, links, holds);
    assert!(validate_instance(&inst).has(ViolationKind::UnplacedObject));
}

#[test]
fn zero_frequency_is_rejected() {
    let (mut inst, _) = fig1();
    inst.apps[0].nodes.get_mut(&4).unwrap().object_freqs.insert(1, 0.0);
    assert!(validate_instance(&inst).has(ViolationKind::NonPositiveFrequency));
}

#[test]
fn download_rate_is_size_times_frequency() {
    let (mut inst, _) = fig1();
    inst.objects[0].size = 10.0;
    inst.apps[0].nodes.get_mut(&2).unwrap().object_freqs.insert(0, 0.5);
    inst.apps[0].nodes.get_mut(&4).unwrap().object_freqs.insert(0, 0.5);
    assert_eq!(inst.download_rate(0, 0).unwrap(), 5.0);
    inst.objects[0].size = 3.0;
    inst.apps[1].nodes.get_mut(&4).unwrap().object_freqs.insert(0, 1.0);
    inst.apps[1].nodes.get_mut(&8).unwrap().object_freqs.insert(0, 1.0);
    assert_eq!(inst.download_rate(0, 1).unwrap(), 3.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trip(seed in 0u64..10_000) {
        let inst = tiny_instance(seed);
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_json(), inst.to_json());
    }

    #[test]
    fn validation_is_deterministic(seed in 0u64..10_000) {
        let inst = tiny_instance(seed);
        let a = validate_instance(&inst);
        prop_assert!(a.is_ok());
        prop_assert_eq!(a, validate_instance(&inst));
    }
}
