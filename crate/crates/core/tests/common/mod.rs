//! Independent reference implementations used by the integration tests.
//! They work from the raw model data (successor lists, formulas and
//! valuations) and never call into the `flat` or `adapt` modules.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use sbcheck_core::model::{BStateId, SBSystem, SStateId, STransId};

/// `(q, r, pending)` with raw indices.
pub type Node = (usize, usize, Option<usize>);

/// Edge label: `None` for a steady move, `Some(t)` for a move inside the adaptation along `t`.
pub type Step = (Node, Option<usize>, Node);

fn sat_label(sys: &SBSystem, q: usize, r: usize) -> bool {
    sys.structure().label(SStateId(r)).evaluate(sys.observation().get(BStateId(q)))
}

fn sat_inv(sys: &SBSystem, q: usize, t: usize) -> bool {
    sys.structure().transition(STransId(t)).invariant.evaluate(sys.observation().get(BStateId(q)))
}

fn b_succ(sys: &SBSystem, q: usize) -> Vec<usize> {
    let mut v: Vec<usize> = sys.behaviour().transitions().iter().filter(|(f, _)| f.0 == q).map(|(_, t)| t.0).collect();
    v.sort();
    v.dedup();
    v
}

/// The four rules, applied one by one to a single state.
pub fn rule_successors(sys: &SBSystem, n: Node) -> Vec<Step> {
    let (q, r, pending) = n;
    let st = sys.structure();
    let mut out = Vec::new();
    match pending {
        None => {
            let succ = b_succ(sys, q);
            for &q2 in &succ {
                if sat_label(sys, q2, r) {
                    out.push((n, None, (q2, r, None)));
                }
            }
            if succ.iter().all(|&q2| !sat_label(sys, q2, r)) {
                for &q2 in &succ {
                    for (t, tr) in st.transitions().iter().enumerate() {
                        if tr.from.0 == r && sat_inv(sys, q2, t) {
                            out.push((n, Some(t), (q2, r, Some(t))));
                        }
                    }
                }
            }
        }
        Some(t) => {
            let target = st.transition(STransId(t)).to.0;
            if sat_label(sys, q, target) {
                out.push((n, Some(t), (q, target, None)));
            } else {
                for q2 in b_succ(sys, q) {
                    if sat_inv(sys, q2, t) {
                        out.push((n, Some(t), (q2, r, Some(t))));
                    }
                }
            }
        }
    }
    out
}

/// Everything reachable from `(q0, r0, ∅)` by the rules.
pub fn brute_flat(sys: &SBSystem) -> (BTreeSet<Node>, BTreeSet<Step>) {
    let init = (sys.behaviour().init().0, sys.structure().init().0, None);
    let mut nodes = BTreeSet::from([init]);
    let mut steps = BTreeSet::new();
    let mut queue = VecDeque::from([init]);
    while let Some(n) = queue.pop_front() {
        for s in rule_successors(sys, n) {
            if nodes.insert(s.2) {
                queue.push_back(s.2);
            }
            steps.insert(s);
        }
    }
    (nodes, steps)
}

/// Some path from `start` ends in a steady pair accepted by `good`.
fn can_escape(sys: &SBSystem, start: Node, good: &dyn Fn(usize, usize) -> bool) -> bool {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        if n.2.is_none() {
            if good(n.0, n.1) {
                return true;
            }
            continue;
        }
        for (_, _, m) in rule_successors(sys, n) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    false
}

/// Every maximal path from `start` is finite and ends in a steady pair accepted by `good`.
fn must_escape(
    sys: &SBSystem,
    n: Node,
    good: &dyn Fn(usize, usize) -> bool,
    on_stack: &mut BTreeSet<Node>,
    memo: &mut BTreeMap<Node, bool>,
) -> bool {
    if n.2.is_none() {
        return good(n.0, n.1);
    }
    if let Some(&v) = memo.get(&n) {
        return v;
    }
    if !on_stack.insert(n) {
        return false;
    }
    let succ = rule_successors(sys, n);
    let ok = !succ.is_empty() && succ.iter().all(|s| must_escape(sys, s.2, good, on_stack, memo));
    on_stack.remove(&n);
    memo.insert(n, ok);
    ok
}

/// Greatest fixpoint of the adaptability step condition, by naive iteration
/// and explicit path search over the rules.
pub fn oracle_relation(sys: &SBSystem, strong: bool) -> BTreeSet<(usize, usize)> {
    let nq = sys.behaviour().len();
    let nr = sys.structure().len();
    let mut rel: BTreeSet<(usize, usize)> =
        (0..nq).flat_map(|q| (0..nr).map(move |r| (q, r))).filter(|&(q, r)| sat_label(sys, q, r)).collect();
    loop {
        let cur = rel.clone();
        let good = |q: usize, r: usize| cur.contains(&(q, r));
        let next: BTreeSet<(usize, usize)> = cur
            .iter()
            .copied()
            .filter(|&(q, r)| {
                let steps = rule_successors(sys, (q, r, None));
                let mut by_target: BTreeMap<usize, Vec<Node>> = BTreeMap::new();
                for (_, label, to) in &steps {
                    match label {
                        None => {
                            if !good(to.0, to.1) {
                                return false;
                            }
                        }
                        Some(_) => by_target.entry(to.0).or_default().push(*to),
                    }
                }
                by_target.values().all(|starts| {
                    if strong {
                        starts.iter().all(|&s| must_escape(sys, s, &good, &mut BTreeSet::new(), &mut BTreeMap::new()))
                    } else {
                        starts.iter().any(|&s| can_escape(sys, s, &good))
                    }
                })
            })
            .collect();
        if next == cur {
            return next;
        }
        rel = next;
    }
}
