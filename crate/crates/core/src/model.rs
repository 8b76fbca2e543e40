//! The two-level system: a behaviour machine, the observation of its states,
//! and a structure machine whose states constrain the behaviour.
//!
//! State ids are dense indices. Construction canonicalises the state order
//! (natural sort by name) and deduplicates transitions, so two systems built
//! from the same declarations compare equal regardless of input order.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Decls, Formula, Operand, Term, Valuation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BStateId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SStateId(pub usize);

/// Index of a structure transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct STransId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("B-state `{0}` declared twice")]
    DuplicateBState(String),
    #[error("S-state `{0}` declared twice")]
    DuplicateSState(String),
    #[error("unknown B-state `{0}`")]
    UnknownBState(String),
    #[error("unknown S-state `{0}`")]
    UnknownSState(String),
    #[error("no B-state id {0}")]
    NoSuchBState(usize),
    #[error("no S-state id {0}")]
    NoSuchSState(usize),
    #[error("the behaviour has no states")]
    EmptyBehaviour,
    #[error("the structure has no states")]
    EmptyStructure,
    #[error("valuation of B-state `{0}` is not total over the observables or leaves a domain")]
    BadValuation(String),
    #[error("formula `{0}` does not match the declared observables")]
    IllTypedFormula(String),
}

/// Compares names so that embedded numbers sort numerically (`q2` < `q10`).
pub(crate) fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (&a[..da], &b[..db]);
                let ta = trim_zeros(na);
                let tb = trim_zeros(nb);
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let z = d.iter().take_while(|&&c| c == b'0').count();
    &d[z.min(d.len().saturating_sub(1))..]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviourMachine {
    names: Vec<String>,
    init: BStateId,
    transitions: Vec<(BStateId, BStateId)>,
    succ: Vec<Vec<BStateId>>,
    pred: Vec<Vec<BStateId>>,
}

impl BehaviourMachine {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn init(&self) -> BStateId {
        self.init
    }

    pub fn name(&self, q: BStateId) -> &str {
        &self.names[q.0]
    }

    pub fn state_ids(&self) -> impl Iterator<Item = BStateId> + '_ {
        (0..self.names.len()).map(BStateId)
    }

    pub fn lookup(&self, name: &str) -> Option<BStateId> {
        self.names.iter().position(|n| n == name).map(BStateId)
    }

    /// Sorted, deduplicated transition pairs.
    pub fn transitions(&self) -> &[(BStateId, BStateId)] {
        &self.transitions
    }

    pub fn successors(&self, q: BStateId) -> &[BStateId] {
        &self.succ[q.0]
    }

    pub fn predecessors(&self, q: BStateId) -> &[BStateId] {
        &self.pred[q.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMap(Vec<Valuation>);

impl ObservationMap {
    pub fn get(&self, q: BStateId) -> &Valuation {
        &self.0[q.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SState {
    pub name: String,
    pub label: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct STransition {
    pub from: SStateId,
    pub invariant: Formula,
    pub to: SStateId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMachine {
    states: Vec<SState>,
    init: SStateId,
    transitions: Vec<STransition>,
    out: Vec<Vec<STransId>>,
}

impl StructureMachine {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn init(&self) -> SStateId {
        self.init
    }

    pub fn state(&self, r: SStateId) -> &SState {
        &self.states[r.0]
    }

    pub fn name(&self, r: SStateId) -> &str {
        &self.states[r.0].name
    }

    pub fn label(&self, r: SStateId) -> &Formula {
        &self.states[r.0].label
    }

    pub fn state_ids(&self) -> impl Iterator<Item = SStateId> + '_ {
        (0..self.states.len()).map(SStateId)
    }

    pub fn lookup(&self, name: &str) -> Option<SStateId> {
        self.states.iter().position(|s| s.name == name).map(SStateId)
    }

    /// Sorted by source, target, then invariant text.
    pub fn transitions(&self) -> &[STransition] {
        &self.transitions
    }

    pub fn transition(&self, t: STransId) -> &STransition {
        &self.transitions[t.0]
    }

    pub fn outgoing(&self, r: SStateId) -> &[STransId] {
        &self.out[r.0]
    }
}

/// A complete two-level system. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SBSystem {
    name: String,
    observables: Decls,
    behaviour: BehaviourMachine,
    observation: ObservationMap,
    structure: StructureMachine,
    // label_sat[r][q] and inv_sat[t][q]; derived from the fields above.
    label_sat: Vec<Vec<bool>>,
    inv_sat: Vec<Vec<bool>>,
}

/// Name-based description of a system, turned into an [`SBSystem`] by [`SystemBuilder::build`].
#[derive(Debug, Clone, Default)]
pub struct SystemBuilder {
    pub name: String,
    pub observables: Decls,
    pub b_states: Vec<(String, Valuation)>,
    pub b_init: String,
    pub b_transitions: Vec<(String, String)>,
    pub s_states: Vec<(String, Formula)>,
    pub s_init: String,
    pub s_transitions: Vec<(String, Formula, String)>,
}

fn formula_conforms(f: &Formula, decls: &Decls) -> bool {
    let var_ok = |name: &str, index: usize| index < decls.len() && decls.get(index).name == name;
    let term_ok = |t: &Term| {
        std::iter::once(&t.head).chain(t.tail.iter().map(|(_, o)| o)).all(|o| match o {
            Operand::Var(v) => var_ok(&v.name, v.index),
            _ => true,
        })
    };
    match f {
        Formula::Const(_) => true,
        Formula::Atom(v) => var_ok(&v.name, v.index),
        Formula::Compare(c) => term_ok(&c.lhs) && term_ok(&c.rhs),
        Formula::Not(g) => formula_conforms(g, decls),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            formula_conforms(a, decls) && formula_conforms(b, decls)
        }
    }
}

impl SystemBuilder {
    pub fn new(name: impl Into<String>, observables: Decls) -> Self {
        SystemBuilder { name: name.into(), observables, ..Default::default() }
    }

    pub fn b_state(mut self, name: &str, v: Valuation) -> Self {
        self.b_states.push((name.to_string(), v));
        self
    }

    pub fn b_init(mut self, name: &str) -> Self {
        self.b_init = name.to_string();
        self
    }

    pub fn b_transition(mut self, from: &str, to: &str) -> Self {
        self.b_transitions.push((from.to_string(), to.to_string()));
        self
    }

    pub fn s_state(mut self, name: &str, label: Formula) -> Self {
        self.s_states.push((name.to_string(), label));
        self
    }

    pub fn s_init(mut self, name: &str) -> Self {
        self.s_init = name.to_string();
        self
    }

    pub fn s_transition(mut self, from: &str, invariant: Formula, to: &str) -> Self {
        self.s_transitions.push((from.to_string(), invariant, to.to_string()));
        self
    }

    pub fn build(self) -> Result<SBSystem, ModelError> {
        let decls = self.observables;
        if self.b_states.is_empty() {
            return Err(ModelError::EmptyBehaviour);
        }
        if self.s_states.is_empty() {
            return Err(ModelError::EmptyStructure);
        }

        let mut b_states = self.b_states;
        b_states.sort_by(|a, b| natural_cmp(&a.0, &b.0));
        for w in b_states.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateBState(w[0].0.clone()));
            }
        }
        for (name, v) in &b_states {
            if !v.conforms_to(&decls) {
                return Err(ModelError::BadValuation(name.clone()));
            }
        }
        let b_index: HashMap<&str, BStateId> =
            b_states.iter().enumerate().map(|(i, (n, _))| (n.as_str(), BStateId(i))).collect();
        let b_id = |n: &str| b_index.get(n).copied().ok_or_else(|| ModelError::UnknownBState(n.to_string()));
        let b_init = b_id(&self.b_init)?;
        let mut b_trans =
            self.b_transitions.iter().map(|(f, t)| Ok((b_id(f)?, b_id(t)?))).collect::<Result<Vec<_>, ModelError>>()?;
        b_trans.sort();
        b_trans.dedup();
        let n = b_states.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for &(f, t) in &b_trans {
            succ[f.0].push(t);
            pred[t.0].push(f);
        }
        let (names, vals): (Vec<_>, Vec<_>) = b_states.into_iter().unzip();
        let behaviour = BehaviourMachine { names, init: b_init, transitions: b_trans, succ, pred };
        let observation = ObservationMap(vals);

        let mut s_states = self.s_states;
        s_states.sort_by(|a, b| natural_cmp(&a.0, &b.0));
        for w in s_states.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateSState(w[0].0.clone()));
            }
        }
        let s_index: HashMap<&str, SStateId> =
            s_states.iter().enumerate().map(|(i, (n, _))| (n.as_str(), SStateId(i))).collect();
        let s_id = |n: &str| s_index.get(n).copied().ok_or_else(|| ModelError::UnknownSState(n.to_string()));
        let s_init = s_id(&self.s_init)?;
        let mut s_trans = self
            .s_transitions
            .into_iter()
            .map(|(f, inv, t)| Ok((s_id(&f)?, inv.to_string(), s_id(&t)?, inv)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        s_trans.sort_by(|a, b| (a.0, a.2, &a.1).cmp(&(b.0, b.2, &b.1)));
        s_trans.dedup_by(|a, b| (a.0, a.2, &a.1) == (b.0, b.2, &b.1));
        let states: Vec<SState> = s_states.into_iter().map(|(name, label)| SState { name, label }).collect();
        for f in states.iter().map(|s| &s.label).chain(s_trans.iter().map(|t| &t.3)) {
            if !formula_conforms(f, &decls) {
                return Err(ModelError::IllTypedFormula(f.to_string()));
            }
        }
        let mut out = vec![Vec::new(); states.len()];
        let transitions: Vec<STransition> = s_trans
            .into_iter()
            .enumerate()
            .map(|(i, (from, _, to, invariant))| {
                out[from.0].push(STransId(i));
                STransition { from, invariant, to }
            })
            .collect();
        let structure = StructureMachine { states, init: s_init, transitions, out };

        let sat = |f: &Formula| observation.0.iter().map(|v| f.evaluate(v)).collect::<Vec<bool>>();
        let label_sat = structure.states.iter().map(|s| sat(&s.label)).collect();
        let inv_sat = structure.transitions.iter().map(|t| sat(&t.invariant)).collect();

        Ok(SBSystem { name: self.name, observables: decls, behaviour, observation, structure, label_sat, inv_sat })
    }
}

impl SBSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn observables(&self) -> &Decls {
        &self.observables
    }

    pub fn behaviour(&self) -> &BehaviourMachine {
        &self.behaviour
    }

    pub fn observation(&self) -> &ObservationMap {
        &self.observation
    }

    pub fn structure(&self) -> &StructureMachine {
        &self.structure
    }

    /// `q ⊨ L(r)`.
    #[inline]
    pub fn in_region(&self, q: BStateId, r: SStateId) -> bool {
        self.label_sat[r.0][q.0]
    }

    /// `q ⊨ φ` for the invariant of structure transition `t`.
    #[inline]
    pub fn meets_invariant(&self, q: BStateId, t: STransId) -> bool {
        self.inv_sat[t.0][q.0]
    }

    /// The valuation recorded for `q`.
    pub fn observe(&self, q: BStateId) -> Result<&Valuation, ModelError> {
        if q.0 < self.behaviour.len() {
            Ok(self.observation.get(q))
        } else {
            Err(ModelError::NoSuchBState(q.0))
        }
    }

    /// The B-states satisfying `L(r)`.
    pub fn constraint_region(&self, r: SStateId) -> Result<Vec<BStateId>, ModelError> {
        if r.0 >= self.structure.len() {
            return Err(ModelError::NoSuchSState(r.0));
        }
        Ok(self.behaviour.state_ids().filter(|&q| self.in_region(q, r)).collect())
    }

    pub fn check_well_formed(&self) -> WellFormedness {
        let mut violations = Vec::new();
        for r in self.structure.state_ids() {
            if !self.label_sat[r.0].iter().any(|&b| b) {
                violations.push(Violation::Unsatisfiable { r, name: self.structure.name(r).to_string() });
            }
        }
        let (q0, r0) = (self.behaviour.init(), self.structure.init());
        if !self.in_region(q0, r0) {
            violations.push(Violation::InitialOutsideRegion {
                q0: self.behaviour.name(q0).to_string(),
                r0: self.structure.name(r0).to_string(),
            });
        }
        WellFormedness { violations }
    }

    /// Returns a builder reproducing this system, for deriving variants.
    pub fn to_builder(&self) -> SystemBuilder {
        let b = &self.behaviour;
        let s = &self.structure;
        SystemBuilder {
            name: self.name.clone(),
            observables: self.observables.clone(),
            b_states: b.state_ids().map(|q| (b.name(q).to_string(), self.observation.get(q).clone())).collect(),
            b_init: b.name(b.init()).to_string(),
            b_transitions: b
                .transitions()
                .iter()
                .map(|&(f, t)| (b.name(f).to_string(), b.name(t).to_string()))
                .collect(),
            s_states: s.states.iter().map(|st| (st.name.clone(), st.label.clone())).collect(),
            s_init: s.name(s.init()).to_string(),
            s_transitions: s
                .transitions
                .iter()
                .map(|t| (s.name(t.from).to_string(), t.invariant.clone(), s.name(t.to).to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// No B-state satisfies `L(r)`.
    Unsatisfiable {
        #[serde(skip)]
        r: SStateId,
        name: String,
    },
    /// `q0 ⊭ L(r0)`.
    InitialOutsideRegion { q0: String, r0: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unsatisfiable { name, .. } => {
                write!(f, "label of S-state `{name}` is not satisfied by any B-state")
            }
            Violation::InitialOutsideRegion { q0, r0 } => {
                write!(f, "initial B-state `{q0}` does not satisfy the label of initial S-state `{r0}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WellFormedness {
    pub violations: Vec<Violation>,
}

impl WellFormedness {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Domain, ObservableDecl, Value};

    fn decls() -> Decls {
        Decls::new(vec![
            ObservableDecl { name: "x".into(), domain: Domain::Bool },
            ObservableDecl { name: "n".into(), domain: Domain::Int { lo: 0, hi: 2 } },
        ])
        .unwrap()
    }

    fn v(x: bool, n: i64) -> Valuation {
        Valuation(vec![Value::Bool(x), Value::Int(n)])
    }

    fn small() -> SystemBuilder {
        let d = decls();
        let f = |s: &str| parse_formula(s, &d).unwrap();
        SystemBuilder::new("small", d.clone())
            .b_state("q10", v(true, 0))
            .b_state("q2", v(true, 1))
            .b_state("q1", v(true, 1))
            .b_init("q1")
            .b_transition("q1", "q2")
            .b_transition("q1", "q2")
            .b_transition("q2", "q10")
            .s_state("r1", f("n > 0"))
            .s_state("r0", f("x"))
            .s_init("r0")
            .s_transition("r0", f("true"), "r1")
    }

    #[test]
    fn natural_order() {
        let mut names = vec!["q10", "q2", "q1", "a", "q01"];
        names.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(names, vec!["a", "q1", "q01", "q2", "q10"]);
    }

    #[test]
    fn canonical_ordering_and_dedup() {
        let sys = small().build().unwrap();
        let b = sys.behaviour();
        assert_eq!(b.state_ids().map(|q| b.name(q)).collect::<Vec<_>>(), vec!["q1", "q2", "q10"]);
        assert_eq!(b.transitions().len(), 2);
        assert_eq!(sys.structure().name(SStateId(0)), "r0");
        assert_eq!(sys.to_builder().build().unwrap(), sys);
    }

    #[test]
    fn shared_valuations_are_allowed() {
        let sys = small().build().unwrap();
        let q1 = sys.behaviour().lookup("q1").unwrap();
        let q2 = sys.behaviour().lookup("q2").unwrap();
        assert_eq!(sys.observe(q1).unwrap(), sys.observe(q2).unwrap());
        assert!(sys.observe(BStateId(99)).is_err());
        for q in sys.behaviour().state_ids() {
            assert!(sys.observe(q).unwrap().conforms_to(sys.observables()));
        }
    }

    #[test]
    fn regions_and_well_formedness() {
        let sys = small().build().unwrap();
        assert!(sys.check_well_formed().is_ok());
        let r1 = sys.structure().lookup("r1").unwrap();
        let names: Vec<_> = sys.constraint_region(r1).unwrap().into_iter().map(|q| sys.behaviour().name(q)).collect();
        assert_eq!(names, vec!["q1", "q2"]);
        assert!(sys.constraint_region(SStateId(7)).is_err());

        let d = decls();
        let mut bad = small();
        bad.s_states[0].1 = parse_formula("n > 0 && n < 1", &d).unwrap();
        bad.b_init = "q10".into();
        bad.b_states[0].1 = v(false, 0);
        let report = bad.build().unwrap().check_well_formed();
        assert_eq!(report.violations.len(), 2);
        assert!(matches!(&report.violations[0], Violation::Unsatisfiable { name, .. } if name == "r1"));
        assert!(matches!(&report.violations[1], Violation::InitialOutsideRegion { q0, .. } if q0 == "q10"));
    }

    #[test]
    fn construction_errors() {
        let mut b = small();
        b.b_states.push(("q1".into(), v(false, 0)));
        assert_eq!(b.build().unwrap_err(), ModelError::DuplicateBState("q1".into()));

        let mut b = small();
        b.b_transitions.push(("q1".into(), "nowhere".into()));
        assert_eq!(b.build().unwrap_err(), ModelError::UnknownBState("nowhere".into()));

        let mut b = small();
        b.b_states[0].1 = v(true, 5);
        assert!(matches!(b.build(), Err(ModelError::BadValuation(_))));

        let mut b = small();
        b.s_init = "r9".into();
        assert_eq!(b.build().unwrap_err(), ModelError::UnknownSState("r9".into()));
    }
}
