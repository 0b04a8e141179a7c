//! Pinned outputs. Set OPMAP_BLESS=1 to rewrite them after a reviewed change.

mod common;

use common::{fig1, fixture_path, tiny};
use opmap::feasibility::{build_comm_sets, check};
use opmap::ilp_export::{build_model, emit_lp, IlpObjective};
use opmap::objectives::evaluate;
use opmap::oracle::{evaluate_mapping, OracleEval};

fn golden(name: &str, actual: &str) {
    let path = fixture_path(name);
    if std::env::var_os("OPMAP_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    assert!(expected == actual, "{name} differs from the pinned output");
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn fig1_eval() -> OracleEval {
    let (inst, m) = fig1();
    evaluate_mapping(&inst, &m).expect("fixture mapping resolves")
}

#[test]
fn fig1_report_matches_independent_evaluation() {
    let eval = fig1_eval();
    golden("fig1_report.json", &(serde_json::to_string_pretty(&eval).unwrap() + "\n"));
    let pinned: serde_json::Value = serde_json::from_str(&common::fixture("fig1_report.json")).unwrap();
    let arr = |k: &str| -> Vec<f64> { pinned[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect() };

    let (inst, m) = fig1();
    let rep = check(&inst, &m).unwrap();
    assert!(rep.feasible && pinned["feasible"].as_bool().unwrap());
    let p = inst.platform.len();
    for u in 0..p {
        assert!(close(rep.compute_util[u], arr("compute")[u]));
        assert!(close(rep.recv_util[u], arr("recv")[u]));
        assert!(close(rep.send_util[u], arr("send")[u]));
        assert!(close(rep.nic_load[u], arr("nic")[u]));
        for v in u + 1..p {
            assert!(close(rep.link(u, v).load, arr("link")[u * p + v]));
        }
    }
    // Hand-evaluated loads on the busiest processor.
    assert!(close(rep.compute_util[2], 0.875));
    assert!(close(rep.nic_load[1], 5.4));
}

#[test]
fn fig1_costs_match_independent_evaluation() {
    let (inst, m) = fig1();
    let cost = evaluate(&inst, &m, &build_comm_sets(&inst, &m).unwrap());
    let want = fig1_eval().cost;
    assert_eq!(cost.proc_nb, want.proc_nb);
    assert!(close(cost.proc_power, want.proc_power));
    assert!(close(cost.bw_sum, want.bw_sum));
    assert!(close(cost.bw_max, want.bw_max));
    assert_eq!(cost.proc_nb, 3);
    assert!(close(cost.bw_sum, 7.4));
}

#[test]
fn tiny_lp_is_pinned() {
    let inst = tiny();
    for obj in [IlpObjective::ProcPower, IlpObjective::BwMax] {
        golden(&format!("tiny_{}.lp", obj.name()), &emit_lp(&build_model(&inst, obj)));
    }
}
