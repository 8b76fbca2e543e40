use std::collections::VecDeque;

use serde::Serialize;

use super::{strong_adaptability_formula, weak_adaptability_formula, Atom, CtlError, CtlFormula};
use crate::flat::{FlatLTS, StateClass};
use crate::model::SBSystem;

/// A finite Kripke frame. Deadlocked states receive a self-loop so every
/// path is infinite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kripke {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    init: usize,
}

impl Kripke {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, init: usize) -> Self {
        assert!(init < n, "initial state {init} out of range for {n} states");
        let mut succ = vec![Vec::new(); n];
        for (a, b) in edges {
            succ[a].push(b);
        }
        for (s, out) in succ.iter_mut().enumerate() {
            out.sort_unstable();
            out.dedup();
            if out.is_empty() {
                out.push(s);
            }
        }
        let mut pred = vec![Vec::new(); n];
        for (s, out) in succ.iter().enumerate() {
            for &t in out {
                pred[t].push(s);
            }
        }
        Kripke { succ, pred, init }
    }

    pub fn from_flat(flat: &FlatLTS) -> Self {
        Kripke::new(flat.len(), flat.edges().iter().map(|e| (e.from, e.to)), flat.init())
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn successors(&self, s: usize) -> &[usize] {
        &self.succ[s]
    }

    pub fn predecessors(&self, s: usize) -> &[usize] {
        &self.pred[s]
    }
}

/// Supplies the truth value of atomic propositions at every state.
pub trait Labels {
    fn atom(&self, a: &Atom) -> Result<Vec<bool>, CtlError>;
}

/// Atom valuation on a flattened system.
pub struct FlatLabels<'a> {
    pub sys: &'a SBSystem,
    pub flat: &'a FlatLTS,
}

impl Labels for FlatLabels<'_> {
    fn atom(&self, a: &Atom) -> Result<Vec<bool>, CtlError> {
        let states = self.flat.states();
        Ok(match a {
            Atom::Adapting => (0..states.len()).map(|i| self.flat.class(i) == StateClass::Adapting).collect(),
            Atom::Steady => (0..states.len()).map(|i| self.flat.class(i) == StateClass::Steady).collect(),
            Atom::In(name) => {
                let r = self.sys.structure().lookup(name).ok_or_else(|| CtlError::UnknownSState(name.clone()))?;
                states.iter().map(|s| s.r == r).collect()
            }
            Atom::Obs(e) => {
                let phi = e.resolve(self.sys.observables()).map_err(CtlError::Formula)?;
                states.iter().map(|s| phi.evaluate(self.sys.observation().get(s.q))).collect()
            }
        })
    }
}

/// Bare `adapting` / `steady` labels, as used for synthetic structures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainLabels {
    pub adapting: Vec<bool>,
    pub steady: Vec<bool>,
}

impl Labels for PlainLabels {
    fn atom(&self, a: &Atom) -> Result<Vec<bool>, CtlError> {
        match a {
            Atom::Adapting => Ok(self.adapting.clone()),
            Atom::Steady => Ok(self.steady.clone()),
            other => Err(CtlError::UnsupportedAtom(other.to_string())),
        }
    }
}

/// The set of states satisfying `f`, by bottom-up labeling.
pub fn check(k: &Kripke, labels: &dyn Labels, f: &CtlFormula) -> Result<Vec<bool>, CtlError> {
    use CtlFormula::*;
    let n = k.len();
    Ok(match f {
        Const(b) => vec![*b; n],
        Atom(a) => labels.atom(a)?,
        Not(g) => not(check(k, labels, g)?),
        And(a, b) => zip(check(k, labels, a)?, check(k, labels, b)?, |x, y| x && y),
        Or(a, b) => zip(check(k, labels, a)?, check(k, labels, b)?, |x, y| x || y),
        Implies(a, b) => zip(check(k, labels, a)?, check(k, labels, b)?, |x, y| !x || y),
        EX(g) => ex(k, &check(k, labels, g)?),
        AX(g) => not(ex(k, &not(check(k, labels, g)?))),
        EU(a, b) => eu(k, &check(k, labels, a)?, check(k, labels, b)?),
        EF(g) => eu(k, &vec![true; n], check(k, labels, g)?),
        EG(g) => eg(k, check(k, labels, g)?),
        AG(g) => not(eu(k, &vec![true; n], not(check(k, labels, g)?))),
        AF(g) => not(eg(k, not(check(k, labels, g)?))),
        AU(a, b) => {
            let sa = check(k, labels, a)?;
            let sb = check(k, labels, b)?;
            let nb = not(sb.clone());
            let na_nb = zip(not(sa), nb.clone(), |x, y| x && y);
            let bad = zip(eu(k, &nb, na_nb), eg(k, nb), |x, y| x || y);
            not(bad)
        }
    })
}

fn not(v: Vec<bool>) -> Vec<bool> {
    v.into_iter().map(|x| !x).collect()
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

fn ex(k: &Kripke, target: &[bool]) -> Vec<bool> {
    let mut out = vec![false; k.len()];
    for (t, _) in target.iter().enumerate().filter(|(_, &b)| b) {
        for &p in k.predecessors(t) {
            out[p] = true;
        }
    }
    out
}

fn eu(k: &Kripke, hold: &[bool], mut reach: Vec<bool>) -> Vec<bool> {
    let mut work: Vec<usize> = (0..k.len()).filter(|&s| reach[s]).collect();
    while let Some(t) = work.pop() {
        for &p in k.predecessors(t) {
            if !reach[p] && hold[p] {
                reach[p] = true;
                work.push(p);
            }
        }
    }
    reach
}

fn eg(k: &Kripke, mut keep: Vec<bool>) -> Vec<bool> {
    let mut live: Vec<usize> = (0..k.len()).map(|s| k.successors(s).iter().filter(|&&t| keep[t]).count()).collect();
    let mut work: Vec<usize> = (0..k.len()).filter(|&s| keep[s] && live[s] == 0).collect();
    for &s in &work {
        keep[s] = false;
    }
    while let Some(t) = work.pop() {
        for &p in k.predecessors(t) {
            if keep[p] {
                live[p] -= 1;
                if live[p] == 0 {
                    keep[p] = false;
                    work.push(p);
                }
            }
        }
    }
    keep
}

/// A finite path, optionally closed into a lasso: after the last state the
/// path continues at `states[loop_start]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub states: Vec<usize>,
    pub loop_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    /// Satisfying state ids, ascending.
    pub satisfying: Vec<usize>,
    pub holds_at_init: bool,
    /// A witness for a satisfied existential formula or a counterexample for a
    /// violated universal one, when the formula has a shape that admits one.
    pub trace: Option<Trace>,
}

/// Checks `f` on the flat system and extracts a trace where possible.
pub fn check_ctl(sys: &SBSystem, flat: &FlatLTS, f: &CtlFormula) -> Result<CheckResult, CtlError> {
    let k = Kripke::from_flat(flat);
    let labels = FlatLabels { sys, flat };
    check_kripke(&k, &labels, f)
}

pub(crate) fn check_kripke(k: &Kripke, labels: &dyn Labels, f: &CtlFormula) -> Result<CheckResult, CtlError> {
    let sat = check(k, labels, f)?;
    let holds = sat[k.init()];
    let trace = trace_for(k, labels, f, holds)?;
    Ok(CheckResult { satisfying: (0..k.len()).filter(|&s| sat[s]).collect(), holds_at_init: holds, trace })
}

fn trace_for(k: &Kripke, labels: &dyn Labels, f: &CtlFormula, holds: bool) -> Result<Option<Trace>, CtlError> {
    use CtlFormula::*;
    let n = k.len();
    Ok(match (f, holds) {
        (EF(g), true) => path_to(k, &vec![true; n], &check(k, labels, g)?),
        (EU(a, b), true) => path_to(k, &check(k, labels, a)?, &check(k, labels, b)?),
        (EG(g), true) => lasso_from(k, k.init(), Vec::new(), &check(k, labels, &EG(g.clone()))?),
        (AF(g), false) => {
            let region = check(k, labels, &EG(Box::new(Not(g.clone()))))?;
            lasso_from(k, k.init(), Vec::new(), &region)
        }
        (AG(g), false) => {
            let bad = not(check(k, labels, g)?);
            let Some(prefix) = path_to(k, &vec![true; n], &bad) else {
                return Ok(None);
            };
            let last = *prefix.states.last().expect("non-empty path");
            let stem = prefix.states[..prefix.states.len() - 1].to_vec();
            let goal = match g.as_ref() {
                AF(h) => Some(h),
                Implies(_, rhs) => match rhs.as_ref() {
                    AF(h) => Some(h),
                    _ => None,
                },
                _ => None,
            };
            let tail = match goal {
                Some(h) => {
                    let region = check(k, labels, &EG(Box::new(Not(h.clone()))))?;
                    lasso_from(k, last, stem, &region)
                }
                None => None,
            };
            Some(tail.unwrap_or(prefix))
        }
        _ => None,
    })
}

/// Shortest path from the initial state through `hold` states to a `goal` state.
fn path_to(k: &Kripke, hold: &[bool], goal: &[bool]) -> Option<Trace> {
    let mut parent = vec![usize::MAX; k.len()];
    let mut queue = VecDeque::from([k.init()]);
    parent[k.init()] = k.init();
    while let Some(s) = queue.pop_front() {
        if goal[s] {
            let mut states = vec![s];
            let mut cur = s;
            while cur != k.init() {
                cur = parent[cur];
                states.push(cur);
            }
            states.reverse();
            return Some(Trace { states, loop_start: None });
        }
        if !hold[s] {
            continue;
        }
        for &t in k.successors(s) {
            if parent[t] == usize::MAX {
                parent[t] = s;
                queue.push_back(t);
            }
        }
    }
    None
}

/// Follows successors inside `region` from `start` until a state repeats.
fn lasso_from(k: &Kripke, start: usize, mut states: Vec<usize>, region: &[bool]) -> Option<Trace> {
    if !region[start] {
        return None;
    }
    let offset = states.len();
    let mut seen = vec![usize::MAX; k.len()];
    let mut cur = start;
    loop {
        if seen[cur] != usize::MAX {
            return Some(Trace { states, loop_start: Some(seen[cur]) });
        }
        seen[cur] = states.len();
        states.push(cur);
        cur = *k.successors(cur).iter().find(|&&t| region[t])?;
        debug_assert!(states.len() - offset <= k.len());
    }
}

/// Decides weak adaptability through `EG(adapting -> EF steady)`.
pub fn weak_adaptable_ctl(sys: &SBSystem, flat: &FlatLTS) -> CheckResult {
    check_ctl(sys, flat, &weak_adaptability_formula()).expect("built-in atoms always resolve")
}

/// Decides strong adaptability through `AG(adapting -> AF steady)`.
pub fn strong_adaptable_ctl(sys: &SBSystem, flat: &FlatLTS) -> CheckResult {
    check_ctl(sys, flat, &strong_adaptability_formula()).expect("built-in atoms always resolve")
}
