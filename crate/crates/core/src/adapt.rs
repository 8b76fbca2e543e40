//! Weak and strong adaptability relations as greatest fixpoints.
//!
//! Both relations start from every pair `(q, r)` with `q ⊨ L(r)` and remove
//! pairs that fail their step condition until nothing changes. The step
//! condition looks at the moves the flat semantics allows from `(q, r, ∅)`:
//!
//! * each Steady move to `(q', r, ∅)` needs `(q', r)` to stay in the relation;
//! * each B-successor `q'` reached by AdaptStart needs an escape: for the weak
//!   relation some adaptation `(φ, r')` started towards `q'` has a finite path
//!   ending in `(q'', r', ∅)` with `(q'', r')` in the relation; for the strong
//!   relation every adaptation started towards `q'` must have only finite
//!   maximal paths, all ending in such a pair.
//!
//! B-successors the flat semantics never enters are not constrained.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::exec::Exec;
use crate::model::{BStateId, SBSystem, SStateId, STransId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Weak,
    Strong,
}

/// Membership matrix over `Q × R`, row-major by B-state.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Matrix {
    cols: usize,
    bits: Vec<bool>,
}

impl Matrix {
    fn get(&self, q: BStateId, r: SStateId) -> bool {
        self.bits[q.0 * self.cols + r.0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdaptRelation {
    kind: Kind,
    m: Matrix,
}

impl AdaptRelation {
    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn contains(&self, q: BStateId, r: SStateId) -> bool {
        self.m.get(q, r)
    }

    /// Pairs in ascending `(q, r)` order.
    pub fn pairs(&self) -> Vec<(BStateId, SStateId)> {
        self.m
            .bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (BStateId(i / self.m.cols), SStateId(i % self.m.cols)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.m.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The set of S-states related to `q`.
    pub fn row(&self, q: BStateId) -> &[bool] {
        &self.m.bits[q.0 * self.m.cols..(q.0 + 1) * self.m.cols]
    }

    pub fn is_subset_of(&self, other: &AdaptRelation) -> bool {
        self.m.bits.iter().zip(&other.m.bits).all(|(&a, &b)| !a || b)
    }

    /// `{"kind":"weak"|"strong","pairs":[["q","r"],...]}`
    pub fn to_json(&self, sys: &SBSystem) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            kind: Kind,
            pairs: Vec<[&'a str; 2]>,
        }
        let b = sys.behaviour();
        let s = sys.structure();
        let doc =
            Doc { kind: self.kind, pairs: self.pairs().into_iter().map(|(q, r)| [b.name(q), s.name(r)]).collect() };
        serde_json::to_string(&doc).expect("relation serialises")
    }
}

/// The candidate every refinement starts from: `{(q, r) | q ⊨ L(r)}`.
pub fn initial_candidate(sys: &SBSystem, kind: Kind) -> AdaptRelation {
    let cols = sys.structure().len();
    let bits = sys
        .behaviour()
        .state_ids()
        .flat_map(|q| sys.structure().state_ids().map(move |r| (q, r)))
        .map(|(q, r)| sys.in_region(q, r))
        .collect();
    AdaptRelation { kind, m: Matrix { cols, bits } }
}

/// For structure transition `t = r -[φ]-> r'`, which B-states `x` make the
/// adaptation state `(x, r, {(φ, r')})` escape into the current candidate.
///
/// Weak: some path reaches an AdaptEnd into a candidate pair (least fixpoint
/// of "ends well, or has a successor that escapes").
/// Strong: every maximal path does (least fixpoint of "ends well, or has at
/// least one successor and all successors escape"); states on cycles never
/// enter the fixpoint.
fn escape_set(sys: &SBSystem, kind: Kind, cand: &Matrix, t: STransId) -> Vec<bool> {
    let b = sys.behaviour();
    let target = sys.structure().transition(t).to;
    let n = b.len();
    let mut escapes = vec![false; n];
    // Successors still not known to escape, per state, for the strong case.
    let mut open = vec![0usize; n];
    let mut work = Vec::new();
    for x in b.state_ids() {
        if sys.in_region(x, target) {
            if cand.get(x, target) {
                escapes[x.0] = true;
                work.push(x);
            }
        } else {
            open[x.0] = b.successors(x).iter().filter(|&&y| sys.meets_invariant(y, t)).count();
        }
    }
    while let Some(y) = work.pop() {
        if !sys.meets_invariant(y, t) {
            continue;
        }
        for &x in b.predecessors(y) {
            if escapes[x.0] || sys.in_region(x, target) {
                continue;
            }
            let done = match kind {
                Kind::Weak => true,
                Kind::Strong => {
                    open[x.0] -= 1;
                    open[x.0] == 0
                }
            };
            if done {
                escapes[x.0] = true;
                work.push(x);
            }
        }
    }
    escapes
}

/// Whether `(q, r)` satisfies the step condition against `cand`.
fn step_holds(sys: &SBSystem, kind: Kind, cand: &Matrix, escapes: &[Vec<bool>], q: BStateId, r: SStateId) -> bool {
    let succ = sys.behaviour().successors(q);
    let mut steady = succ.iter().filter(|&&q2| sys.in_region(q2, r)).peekable();
    if steady.peek().is_some() {
        return steady.all(|&q2| cand.get(q2, r));
    }
    let out = sys.structure().outgoing(r);
    succ.iter().all(|&q2| {
        let mut started = out.iter().filter(|&&t| sys.meets_invariant(q2, t)).peekable();
        if started.peek().is_none() {
            // AdaptStart cannot move to q2.
            return true;
        }
        match kind {
            Kind::Weak => started.any(|&t| escapes[t.0][q2.0]),
            Kind::Strong => started.all(|&t| escapes[t.0][q2.0]),
        }
    })
}

/// One refinement step: drops every pair of `rel` whose step condition fails.
pub fn refine_step(sys: &SBSystem, rel: &AdaptRelation, exec: Exec) -> AdaptRelation {
    let kind = rel.kind;
    let cand = &rel.m;
    let n_trans = sys.structure().transitions().len();
    let escapes: Vec<Vec<bool>> = exec.map_range(n_trans, |t| escape_set(sys, kind, cand, STransId(t)));
    let cols = cand.cols;
    let bits = exec.map_range(cand.bits.len(), |i| {
        cand.bits[i] && step_holds(sys, kind, cand, &escapes, BStateId(i / cols), SStateId(i % cols))
    });
    AdaptRelation { kind, m: Matrix { cols, bits } }
}

pub fn relation_with(sys: &SBSystem, kind: Kind, exec: Exec) -> AdaptRelation {
    let mut rel = initial_candidate(sys, kind);
    loop {
        let next = refine_step(sys, &rel, exec);
        if next == rel {
            return rel;
        }
        rel = next;
    }
}

pub fn weak_relation(sys: &SBSystem) -> AdaptRelation {
    relation_with(sys, Kind::Weak, Exec::default())
}

pub fn strong_relation(sys: &SBSystem) -> AdaptRelation {
    relation_with(sys, Kind::Strong, Exec::default())
}

pub fn is_weak_adaptable(sys: &SBSystem) -> bool {
    weak_relation(sys).contains(sys.behaviour().init(), sys.structure().init())
}

pub fn is_strong_adaptable(sys: &SBSystem) -> bool {
    strong_relation(sys).contains(sys.behaviour().init(), sys.structure().init())
}

/// B-states grouped by identical rows of the relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivPartition {
    pub kind: Kind,
    /// Blocks ordered by their smallest member; members ascending.
    pub blocks: Vec<Vec<BStateId>>,
}

impl EquivPartition {
    pub fn block_of(&self, q: BStateId) -> usize {
        self.blocks.iter().position(|b| b.contains(&q)).expect("partition covers Q")
    }

    pub fn equivalent(&self, a: BStateId, b: BStateId) -> bool {
        self.block_of(a) == self.block_of(b)
    }
}

pub fn partition_of(rel: &AdaptRelation, n_states: usize) -> EquivPartition {
    let mut by_row: BTreeMap<usize, Vec<BStateId>> = BTreeMap::new();
    let mut seen: Vec<(Vec<bool>, usize)> = Vec::new();
    for q in (0..n_states).map(BStateId) {
        let row = rel.row(q);
        let key = match seen.iter().find(|(r, _)| r.as_slice() == row) {
            Some((_, k)) => *k,
            None => {
                seen.push((row.to_vec(), q.0));
                q.0
            }
        };
        by_row.entry(key).or_default().push(q);
    }
    EquivPartition { kind: rel.kind, blocks: by_row.into_values().collect() }
}

/// `q1 ≈ q2` iff they are related to exactly the same S-states.
pub fn equiv_partition(sys: &SBSystem, kind: Kind) -> EquivPartition {
    let rel = relation_with(sys, kind, Exec::default());
    partition_of(&rel, sys.behaviour().len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Decls, Domain, ObservableDecl, Valuation, Value};
    use crate::model::SystemBuilder;

    fn decls() -> Decls {
        Decls::new(vec![ObservableDecl { name: "n".into(), domain: Domain::Int { lo: 0, hi: 3 } }]).unwrap()
    }

    /// q0 -> {q1, q2}; q1 -> q3; q2 -> q2. Region r0 = {n == 0}, target r1 = {n == 3},
    /// invariant `n > 0`. From q2 the adaptation loops forever.
    fn fork() -> SBSystem {
        let d = decls();
        let f = |s: &str| parse_formula(s, &d).unwrap();
        SystemBuilder::new("fork", d.clone())
            .b_state("q0", Valuation(vec![Value::Int(0)]))
            .b_state("q1", Valuation(vec![Value::Int(1)]))
            .b_state("q2", Valuation(vec![Value::Int(2)]))
            .b_state("q3", Valuation(vec![Value::Int(3)]))
            .b_init("q0")
            .b_transition("q0", "q1")
            .b_transition("q0", "q2")
            .b_transition("q1", "q3")
            .b_transition("q2", "q2")
            .b_transition("q2", "q3")
            .s_state("r0", f("n == 0"))
            .s_state("r1", f("n == 3"))
            .s_init("r0")
            .s_transition("r0", f("n > 0"), "r1")
            .build()
            .unwrap()
    }

    #[test]
    fn deadlocked_good_state_is_adaptable() {
        let d = Decls::new(vec![ObservableDecl { name: "x".into(), domain: Domain::Bool }]).unwrap();
        let sys = SystemBuilder::new("one", d.clone())
            .b_state("q0", Valuation(vec![Value::Bool(true)]))
            .b_init("q0")
            .s_state("r0", parse_formula("x", &d).unwrap())
            .s_init("r0")
            .build()
            .unwrap();
        assert!(is_weak_adaptable(&sys));
        assert!(is_strong_adaptable(&sys));
    }

    #[test]
    fn cycle_breaks_strong_but_not_weak() {
        let sys = fork();
        assert!(is_weak_adaptable(&sys));
        assert!(!is_strong_adaptable(&sys));
        let strong = strong_relation(&sys);
        assert!(strong.is_subset_of(&weak_relation(&sys)));
        // q3 in r1 is a good deadlock-free pair: q3 has no successors.
        assert!(strong.contains(BStateId(3), SStateId(1)));
    }

    #[test]
    fn fixpoint_is_stable() {
        let sys = fork();
        for kind in [Kind::Weak, Kind::Strong] {
            let rel = relation_with(&sys, kind, Exec::Sequential);
            assert_eq!(refine_step(&sys, &rel, Exec::Sequential), rel);
            assert_eq!(relation_with(&sys, kind, Exec::Parallel), rel);
            for (q, r) in rel.pairs() {
                assert!(sys.in_region(q, r));
            }
        }
    }

    #[test]
    fn partition_groups_identical_rows() {
        let sys = fork();
        let p = equiv_partition(&sys, Kind::Weak);
        let rel = weak_relation(&sys);
        for a in sys.behaviour().state_ids() {
            assert!(p.equivalent(a, a));
            for b in sys.behaviour().state_ids() {
                assert_eq!(p.equivalent(a, b), rel.row(a) == rel.row(b));
            }
        }
        let total: usize = p.blocks.iter().map(Vec::len).sum();
        assert_eq!(total, sys.behaviour().len());
    }

    #[test]
    fn relation_json() {
        let sys = fork();
        let json = strong_relation(&sys).to_json(&sys);
        assert!(json.starts_with("{\"kind\":\"strong\",\"pairs\":["));
        assert!(json.contains("[\"q3\",\"r1\"]"));
    }
}
