//! Flattened operational semantics.
//!
//! A flat state is a triple `(q, r, pending)` where `pending` is either empty
//! or names the structure transition `r -[φ]-> r'` being adapted along. Four
//! rules generate the transitions:
//!
//! * **Steady**: `(q,r,∅) → (q',r,∅)` when `q →B q'` and `q' ⊨ L(r)`.
//! * **AdaptStart**: when no B-successor of `q` satisfies `L(r)`,
//!   `(q,r,∅) → (q',r,{(φ,r')})` for every `q →B q'` and `r -[φ]-> r'` with `q' ⊨ φ`.
//! * **Adapt**: `(q,r,{(φ,r')}) → (q',r,{(φ,r')})` when `q ⊭ L(r')`, `q →B q'`, `q' ⊨ φ`.
//! * **AdaptEnd**: `(q,r,{(φ,r')}) → (q,r',∅)` when `q ⊨ L(r')`.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BStateId, SBSystem, SStateId, STransId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlatState {
    pub q: BStateId,
    pub r: SStateId,
    /// The structure transition currently being adapted along, if any.
    pub pending: Option<STransId>,
}

impl FlatState {
    pub fn steady(q: BStateId, r: SStateId) -> Self {
        FlatState { q, r, pending: None }
    }

    pub fn render(&self, sys: &SBSystem) -> String {
        let b = sys.behaviour();
        let s = sys.structure();
        match self.pending {
            None => format!("({}, {}, ∅)", b.name(self.q), s.name(self.r)),
            Some(t) => {
                let t = s.transition(t);
                format!("({}, {}, {{({}, {})}})", b.name(self.q), s.name(self.r), t.invariant, s.name(t.to))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlatLabel {
    /// `→r`
    Steady(SStateId),
    /// `→(r,φ,r')`, with `(φ, r')` given by the structure transition `via`.
    Adapting { r: SStateId, via: STransId },
}

impl FlatLabel {
    pub fn is_adapting(&self) -> bool {
        matches!(self, FlatLabel::Adapting { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    Steady,
    AdaptStart,
    Adapt,
    AdaptEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlatTransition {
    pub from: FlatState,
    pub to: FlatState,
    pub label: FlatLabel,
}

impl FlatTransition {
    /// The rule that produced this transition, recovered from the state shapes.
    pub fn rule(&self) -> Rule {
        match (self.label, self.from.pending, self.to.pending) {
            (FlatLabel::Steady(_), _, _) => Rule::Steady,
            (_, None, _) => Rule::AdaptStart,
            (_, Some(_), None) => Rule::AdaptEnd,
            (_, Some(_), Some(_)) => Rule::Adapt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateClass {
    Steady,
    Adapting,
    Stuck,
}

pub fn initial_state(sys: &SBSystem) -> FlatState {
    FlatState::steady(sys.behaviour().init(), sys.structure().init())
}

/// Every transition the rules license from `s`, in deterministic order
/// (target B-state, then structure transition).
pub fn successors(sys: &SBSystem, s: &FlatState) -> Vec<FlatTransition> {
    let b = sys.behaviour();
    let st = sys.structure();
    let mut out = Vec::new();
    match s.pending {
        None => {
            let succ = b.successors(s.q);
            let mut steady = succ.iter().filter(|&&q2| sys.in_region(q2, s.r)).peekable();
            if steady.peek().is_some() {
                out.extend(steady.map(|&q2| FlatTransition {
                    from: *s,
                    to: FlatState::steady(q2, s.r),
                    label: FlatLabel::Steady(s.r),
                }));
            } else {
                for &q2 in succ {
                    for &t in st.outgoing(s.r) {
                        if sys.meets_invariant(q2, t) {
                            out.push(FlatTransition {
                                from: *s,
                                to: FlatState { q: q2, r: s.r, pending: Some(t) },
                                label: FlatLabel::Adapting { r: s.r, via: t },
                            });
                        }
                    }
                }
            }
        }
        Some(t) => {
            let label = FlatLabel::Adapting { r: s.r, via: t };
            let target = st.transition(t).to;
            if sys.in_region(s.q, target) {
                out.push(FlatTransition { from: *s, to: FlatState::steady(s.q, target), label });
            } else {
                for &q2 in b.successors(s.q) {
                    if sys.meets_invariant(q2, t) {
                        out.push(FlatTransition { from: *s, to: FlatState { q: q2, r: s.r, pending: Some(t) }, label });
                    }
                }
            }
        }
    }
    out
}

/// Classifies `s` for the `adapting` / `steady` atomic propositions.
pub fn classify(sys: &SBSystem, s: &FlatState) -> StateClass {
    let succ = successors(sys, s);
    classify_with(s, &succ)
}

fn classify_with(s: &FlatState, succ: &[FlatTransition]) -> StateClass {
    if succ.iter().any(|t| t.label.is_adapting()) {
        StateClass::Adapting
    } else if s.pending.is_none() {
        StateClass::Steady
    } else {
        StateClass::Stuck
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: FlatLabel,
}

/// The reachable flat transition system. State 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatLTS {
    states: Vec<FlatState>,
    classes: Vec<StateClass>,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    index: HashMap<FlatState, usize>,
}

impl FlatLTS {
    pub fn init(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FlatState] {
        &self.states
    }

    pub fn state(&self, id: usize) -> &FlatState {
        &self.states[id]
    }

    pub fn class(&self, id: usize) -> StateClass {
        self.classes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Indices into [`FlatLTS::edges`] leaving `id`.
    pub fn outgoing(&self, id: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.out[id].iter().map(|&e| &self.edges[e])
    }

    pub fn id_of(&self, s: &FlatState) -> Option<usize> {
        self.index.get(s).copied()
    }

    fn from_parts(states: Vec<FlatState>, classes: Vec<StateClass>, edges: Vec<Edge>) -> Self {
        let mut out = vec![Vec::new(); states.len()];
        for (i, e) in edges.iter().enumerate() {
            out[e.from].push(i);
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        FlatLTS { states, classes, edges, out, index }
    }
}

/// Breadth-first exploration of everything reachable from `(q0, r0, ∅)`.
pub fn flatten(sys: &SBSystem) -> FlatLTS {
    let init = initial_state(sys);
    let mut states = vec![init];
    let mut index = HashMap::from([(init, 0usize)]);
    let mut classes = Vec::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let s = states[id];
        let succ = successors(sys, &s);
        if classes.len() <= id {
            classes.resize(id + 1, StateClass::Steady);
        }
        classes[id] = classify_with(&s, &succ);
        for t in succ {
            let to = *index.entry(t.to).or_insert_with(|| {
                states.push(t.to);
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            edges.push(Edge { from: id, to, label: t.label });
        }
    }
    classes.resize(states.len(), StateClass::Steady);
    FlatLTS::from_parts(states, classes, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WalkEnd {
    /// The requested number of steps was taken.
    Completed,
    /// A state without successors was reached.
    Deadlock,
}

#[derive(Debug, Clone)]
pub struct Walk {
    pub start: FlatState,
    pub steps: Vec<FlatTransition>,
    pub end: WalkEnd,
}

/// A uniformly random walk of at most `steps` transitions from the initial state.
pub fn random_walk<R: Rng>(sys: &SBSystem, steps: usize, rng: &mut R) -> Walk {
    let start = initial_state(sys);
    let mut cur = start;
    let mut taken = Vec::with_capacity(steps);
    for _ in 0..steps {
        let succ = successors(sys, &cur);
        if succ.is_empty() {
            return Walk { start, steps: taken, end: WalkEnd::Deadlock };
        }
        let t = succ[rng.gen_range(0..succ.len())];
        cur = t.to;
        taken.push(t);
    }
    Walk { start, steps: taken, end: WalkEnd::Completed }
}

// ---------------------------------------------------------------------------
// Export

#[derive(Serialize, Deserialize)]
struct JsonPending {
    inv: String,
    target: String,
}

#[derive(Serialize, Deserialize)]
struct JsonState {
    id: usize,
    q: String,
    r: String,
    pending: Option<JsonPending>,
    class: StateClass,
}

#[derive(Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum JsonKind {
    Steady,
    Adapt,
}

#[derive(Serialize, Deserialize)]
struct JsonTransition {
    from: usize,
    to: usize,
    kind: JsonKind,
    r: String,
    inv: Option<String>,
    target: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonLts {
    states: Vec<JsonState>,
    init: usize,
    transitions: Vec<JsonTransition>,
}

pub fn export_json(sys: &SBSystem, flat: &FlatLTS) -> String {
    let b = sys.behaviour();
    let st = sys.structure();
    let pending = |t: STransId| {
        let t = st.transition(t);
        JsonPending { inv: t.invariant.to_string(), target: st.name(t.to).to_string() }
    };
    let doc = JsonLts {
        states: flat
            .states
            .iter()
            .enumerate()
            .map(|(id, s)| JsonState {
                id,
                q: b.name(s.q).to_string(),
                r: st.name(s.r).to_string(),
                pending: s.pending.map(pending),
                class: flat.classes[id],
            })
            .collect(),
        init: flat.init(),
        transitions: flat
            .edges
            .iter()
            .map(|e| match e.label {
                FlatLabel::Steady(r) => JsonTransition {
                    from: e.from,
                    to: e.to,
                    kind: JsonKind::Steady,
                    r: st.name(r).to_string(),
                    inv: None,
                    target: None,
                },
                FlatLabel::Adapting { r, via } => {
                    let p = pending(via);
                    JsonTransition {
                        from: e.from,
                        to: e.to,
                        kind: JsonKind::Adapt,
                        r: st.name(r).to_string(),
                        inv: Some(p.inv),
                        target: Some(p.target),
                    }
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("flat LTS serialises")
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown B-state `{0}`")]
    UnknownBState(String),
    #[error("unknown S-state `{0}`")]
    UnknownSState(String),
    #[error("no structure transition {from} -[{inv}]-> {target}")]
    UnknownTransition { from: String, inv: String, target: String },
    #[error("state ids must be 0..n in order and init must be 0")]
    BadIds,
    #[error("transition {0} refers to a missing state")]
    DanglingTransition(usize),
    #[error("adapt transition {0} lacks its invariant or target")]
    IncompleteLabel(usize),
}

/// Reads back the output of [`export_json`] against the system it was built from.
pub fn import_json(text: &str, sys: &SBSystem) -> Result<FlatLTS, ImportError> {
    let doc: JsonLts = serde_json::from_str(text)?;
    let b = sys.behaviour();
    let st = sys.structure();
    let q_id = |n: &str| b.lookup(n).ok_or_else(|| ImportError::UnknownBState(n.to_string()));
    let r_id = |n: &str| st.lookup(n).ok_or_else(|| ImportError::UnknownSState(n.to_string()));
    let via = |r: SStateId, inv: &str, target: &str| {
        let to = r_id(target)?;
        st.outgoing(r)
            .iter()
            .copied()
            .find(|&t| st.transition(t).to == to && st.transition(t).invariant.to_string() == inv)
            .ok_or_else(|| ImportError::UnknownTransition {
                from: st.name(r).to_string(),
                inv: inv.to_string(),
                target: target.to_string(),
            })
    };
    if doc.init != 0 || doc.states.iter().enumerate().any(|(i, s)| s.id != i) {
        return Err(ImportError::BadIds);
    }
    let mut states = Vec::with_capacity(doc.states.len());
    let mut classes = Vec::with_capacity(doc.states.len());
    for s in &doc.states {
        let r = r_id(&s.r)?;
        let pending = match &s.pending {
            None => None,
            Some(p) => Some(via(r, &p.inv, &p.target)?),
        };
        states.push(FlatState { q: q_id(&s.q)?, r, pending });
        classes.push(s.class);
    }
    let mut edges = Vec::with_capacity(doc.transitions.len());
    for (i, t) in doc.transitions.iter().enumerate() {
        if t.from >= states.len() || t.to >= states.len() {
            return Err(ImportError::DanglingTransition(i));
        }
        let r = r_id(&t.r)?;
        let label = match t.kind {
            JsonKind::Steady => FlatLabel::Steady(r),
            JsonKind::Adapt => {
                let (Some(inv), Some(target)) = (&t.inv, &t.target) else {
                    return Err(ImportError::IncompleteLabel(i));
                };
                FlatLabel::Adapting { r, via: via(r, inv, target)? }
            }
        };
        edges.push(Edge { from: t.from, to: t.to, label });
    }
    Ok(FlatLTS::from_parts(states, classes, edges))
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering. Adaptation-phase states are shaded, states with an
/// outgoing adapting transition get a heavy border, stuck states a double one.
pub fn export_dot(sys: &SBSystem, flat: &FlatLTS) -> String {
    let b = sys.behaviour();
    let st = sys.structure();
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", dot_escape(sys.name())).unwrap();
    out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
    for (id, s) in flat.states.iter().enumerate() {
        let mut label = format!("{},{}", b.name(s.q), st.name(s.r));
        if let Some(t) = s.pending {
            let t = st.transition(t);
            write!(label, ",({},{})", t.invariant, st.name(t.to)).unwrap();
        }
        let mut attrs = vec![format!("label=\"{}\"", dot_escape(&label))];
        if s.pending.is_some() {
            attrs.push("style=filled".into());
            attrs.push("fillcolor=\"#f4cccc\"".into());
        }
        match flat.classes[id] {
            StateClass::Adapting => attrs.push("penwidth=2".into()),
            StateClass::Stuck => attrs.push("peripheries=2".into()),
            StateClass::Steady => {}
        }
        if id == flat.init() {
            attrs.push("shape=ellipse".into());
        }
        writeln!(out, "  s{id} [{}];", attrs.join(", ")).unwrap();
    }
    for e in &flat.edges {
        let label = match e.label {
            FlatLabel::Steady(r) => st.name(r).to_string(),
            FlatLabel::Adapting { r, via } => {
                let t = st.transition(via);
                format!("{},{},{}", st.name(r), t.invariant, st.name(t.to))
            }
        };
        writeln!(out, "  s{} -> s{} [label=\"{}\"];", e.from, e.to, dot_escape(&label)).unwrap();
    }
    out.push_str("}\n");
    out
}
