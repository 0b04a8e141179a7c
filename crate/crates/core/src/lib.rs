//! Placement of multiple concurrent operator trees onto a heterogeneous
//! processor clique under steady-state throughput constraints.
//!
//! The crate is organised around a single problem [`model::Instance`] and a
//! [`model::Mapping`] of its tree nodes onto processors:
//!
//! - [`feasibility`] expands a mapping (including result reuse between trees)
//!   and evaluates the compute, link-share, network-card and link constraints;
//! - [`objectives`] turns a feasible mapping into its four costs;
//! - [`heuristics`] builds mappings greedily (six traversal heuristics crossed
//!   with four processor-selection strategies);
//! - [`oracle`] enumerates every mapping of tiny instances and re-evaluates the
//!   constraints along an independent code path;
//! - [`ilp_export`] writes the integer linear program in LP text format;
//! - [`generator`] and [`harness`] produce random instances and run the
//!   experiment sweeps.

pub mod feasibility;
pub mod generator;
pub mod harness;
pub mod heuristics;
pub mod ilp_export;
pub mod model;
pub mod objectives;
pub mod oracle;

/// Relative slack accepted by the constraint checker.
pub const FEAS_EPS: f64 = 1e-9;

/// `load <= capacity` up to [`FEAS_EPS`] relative slack.
pub(crate) fn within(load: f64, capacity: f64) -> bool {
    load <= capacity + FEAS_EPS * capacity.abs().max(1.0)
}
