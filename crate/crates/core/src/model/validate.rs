use serde::Serialize;

use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    IdMismatch,
    UnknownReference,
    BinaryArity,
    DuplicateRequirement,
    OperatorCycle,
    NegativeParameter,
    NonPositiveSize,
    UnplacedObject,
    MissingRoot,
    OrphanNode,
    ChildMismatch,
    NonPositiveThroughput,
    FrequencyMismatch,
    NonPositiveFrequency,
    InconsistentFrequency,
    BadLink,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, entity: impl Into<String>, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation { entity: entity.into(), kind, message: message.into() });
    }
}

/// Checks every structural invariant of an instance. Never fails; broken
/// invariants are returned as data.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    use ViolationKind::*;
    let mut r = ValidationReport::default();
    let n_ops = inst.operators.len();
    let n_objs = inst.objects.len();

    for (pos, op) in inst.operators.iter().enumerate() {
        let e = format!("operator {}", op.id);
        if op.id != pos {
            r.push(&e, IdMismatch, format!("listed at position {pos}"));
        }
        if op.required_objects.len() + op.required_operators.len() > 2 {
            r.push(&e, BinaryArity, "more than two requirements in a binary tree");
        }
        if !(op.comp >= 0.0) || !(op.out_size >= 0.0) {
            r.push(&e, NegativeParameter, "comp and out_size must be >= 0");
        }
        let mut objs = op.required_objects.clone();
        objs.sort_unstable();
        objs.dedup();
        if objs.len() != op.required_objects.len() {
            r.push(&e, DuplicateRequirement, "an object is listed twice");
        }
        for &j in &op.required_objects {
            if j >= n_objs {
                r.push(&e, UnknownReference, format!("unknown object {j}"));
            }
        }
        for &p in &op.required_operators {
            if p >= n_ops {
                r.push(&e, UnknownReference, format!("unknown operator {p}"));
            }
        }
    }
    for p in operators_on_cycles(inst) {
        r.push(format!("operator {p}"), OperatorCycle, "operator transitively requires itself");
    }

    for (pos, ob) in inst.objects.iter().enumerate() {
        let e = format!("object {}", ob.id);
        if ob.id != pos {
            r.push(&e, IdMismatch, format!("listed at position {pos}"));
        }
        if !(ob.size > 0.0) {
            r.push(&e, NonPositiveSize, "size must be > 0");
        }
        if !inst.platform.holds.iter().any(|h| h.contains(&ob.id)) {
            r.push(&e, UnplacedObject, "held by no processor");
        }
    }

    let pf = &inst.platform;
    for (pos, q) in pf.processors.iter().enumerate() {
        let e = format!("processor {}", q.id);
        if q.id != pos {
            r.push(&e, IdMismatch, format!("listed at position {pos}"));
        }
        if !(q.speed >= 0.0) || !(q.nic_bw >= 0.0) {
            r.push(&e, NegativeParameter, "speed and nic_bw must be >= 0");
        }
    }
    for (u, held) in pf.holds.iter().enumerate() {
        for &j in held {
            if j >= n_objs {
                r.push(format!("processor {u}"), UnknownReference, format!("holds unknown object {j}"));
            }
        }
    }
    for u in 0..pf.len() {
        for v in u + 1..pf.len() {
            if !(pf.link(u, v) > 0.0) {
                r.push(format!("link {u}-{v}"), BadLink, "link bandwidth missing or not positive");
            }
        }
    }

    for (pos, app) in inst.apps.iter().enumerate() {
        validate_app(inst, pos, app, &mut r);
    }
    r
}

fn validate_app(inst: &Instance, pos: usize, app: &ApplicationTree, r: &mut ValidationReport) {
    use ViolationKind::*;
    let e = format!("application {}", app.app_id);
    if app.app_id != pos {
        r.push(&e, IdMismatch, format!("listed at position {pos}"));
    }
    if !(app.throughput > 0.0) {
        r.push(&e, NonPositiveThroughput, "throughput must be > 0");
    }
    if !app.nodes.contains_key(&1) {
        r.push(&e, MissingRoot, "node 1 is missing");
    }
    let mut freq_seen: BTreeMap<ObjId, f64> = BTreeMap::new();
    for (&i, node) in &app.nodes {
        let ne = format!("application {} node {}", app.app_id, i);
        if i == 0 || i >= (1 << 62) {
            r.push(&ne, OrphanNode, "node index out of range");
            continue;
        }
        if i > 1 && !app.nodes.contains_key(&(i / 2)) {
            r.push(&ne, OrphanNode, format!("parent {} is missing", i / 2));
        }
        let Some(op) = inst.operators.get(node.operator) else {
            r.push(&ne, UnknownReference, format!("unknown operator {}", node.operator));
            continue;
        };
        let expected: Vec<Option<OpId>> = vec![
            op.required_operators.first().copied(),
            op.required_operators.get(1).copied(),
        ];
        for (slot, child) in [2 * i, 2 * i + 1].into_iter().enumerate() {
            let actual = app.nodes.get(&child).map(|c| c.operator);
            if actual != expected[slot] {
                r.push(
                    &ne,
                    ChildMismatch,
                    format!("child {child} computes {actual:?}, operator requires {:?}", expected[slot]),
                );
            }
        }
        let mut want = op.required_objects.clone();
        want.sort_unstable();
        let have: Vec<ObjId> = node.object_freqs.keys().copied().collect();
        if want != have {
            r.push(&ne, FrequencyMismatch, "object_freqs keys differ from the operator's objects");
        }
        for (&j, &f) in &node.object_freqs {
            if !(f > 0.0) {
                r.push(&ne, NonPositiveFrequency, format!("frequency for object {j} must be > 0"));
            }
            if let Some(&prev) = freq_seen.get(&j) {
                if prev != f {
                    r.push(&ne, InconsistentFrequency, format!("object {j} frequency differs within the application"));
                }
            } else {
                freq_seen.insert(j, f);
            }
        }
    }
}

fn operators_on_cycles(inst: &Instance) -> Vec<OpId> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let n = inst.operators.len();
    let mut state = vec![0u8; n];
    let mut cyclic = BTreeSet::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(OpId, usize)> = vec![(start, 0)];
        state[start] = 1;
        while let Some(&mut (p, ref mut next)) = stack.last_mut() {
            let reqs = &inst.operators[p].required_operators;
            if *next < reqs.len() {
                let q = reqs[*next];
                *next += 1;
                if q >= n {
                    continue;
                }
                match state[q] {
                    0 => {
                        state[q] = 1;
                        stack.push((q, 0));
                    }
                    1 => {
                        let at = stack.iter().position(|&(s, _)| s == q).unwrap_or(0);
                        cyclic.extend(stack[at..].iter().map(|&(s, _)| s));
                    }
                    _ => {}
                }
            } else {
                state[p] = 2;
                stack.pop();
            }
        }
    }
    cyclic.into_iter().collect()
}
