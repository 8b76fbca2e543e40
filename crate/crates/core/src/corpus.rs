//! Seeded random systems, Kripke frames and CTL formulas for differential
//! testing, plus a greedy shrinker for failing systems.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctl::{Atom, CtlFormula, Kripke, PlainLabels};
use crate::exec::Exec;
use crate::formula::{Decls, Domain, Formula, ObservableDecl, Valuation, Value, Var};
use crate::model::{SBSystem, SystemBuilder};

/// Size bounds for generated systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub max_b_states: usize,
    pub max_s_states: usize,
    pub max_observables: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_b_states: 8, max_s_states: 4, max_observables: 3 }
    }
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random boolean formula over `decls` (all boolean) of depth at most `depth`.
pub fn random_formula<R: Rng>(decls: &Decls, depth: usize, rng: &mut R) -> Formula {
    if depth == 0 || rng.gen_bool(0.35) {
        if decls.is_empty() || rng.gen_bool(0.1) {
            return Formula::Const(rng.gen());
        }
        let index = rng.gen_range(0..decls.len());
        let atom = Formula::Atom(Var { name: decls.get(index).name.clone(), index });
        return if rng.gen_bool(0.4) { atom.negate() } else { atom };
    }
    let a = random_formula(decls, depth - 1, rng);
    match rng.gen_range(0..4) {
        0 => a.negate(),
        1 => a.and(random_formula(decls, depth - 1, rng)),
        2 => a.or(random_formula(decls, depth - 1, rng)),
        _ => a.implies(random_formula(decls, depth - 1, rng)),
    }
}

/// The conjunction of literals describing `v` exactly.
fn cube(decls: &Decls, v: &Valuation) -> Formula {
    let mut out: Option<Formula> = None;
    for (index, d) in decls.iter().enumerate() {
        let atom = Formula::Atom(Var { name: d.name.clone(), index });
        let lit = if *v.get(index) == Value::Bool(true) { atom } else { atom.negate() };
        out = Some(match out {
            None => lit,
            Some(f) => f.and(lit),
        });
    }
    out.unwrap_or(Formula::Const(true))
}

/// A random well-formed system within `bounds`, over boolean observables.
pub fn random_system<R: Rng>(bounds: Bounds, rng: &mut R) -> SBSystem {
    let n_obs = rng.gen_range(1..=bounds.max_observables.max(1));
    let decls =
        Decls::new((0..n_obs).map(|i| ObservableDecl { name: format!("x{i}"), domain: Domain::Bool }).collect())
            .expect("distinct generated names");
    let n_b = rng.gen_range(1..=bounds.max_b_states.max(1));
    let n_s = rng.gen_range(1..=bounds.max_s_states.max(1));

    let vals: Vec<Valuation> =
        (0..n_b).map(|_| Valuation((0..n_obs).map(|_| Value::Bool(rng.gen())).collect())).collect();
    let edge_p = rng.gen_range(0.15..0.5);
    let mut b = SystemBuilder::new("random", decls.clone());
    for (i, v) in vals.iter().enumerate() {
        b = b.b_state(&format!("q{i}"), v.clone());
    }
    b = b.b_init("q0");
    for i in 0..n_b {
        for j in 0..n_b {
            if rng.gen_bool(edge_p) {
                b = b.b_transition(&format!("q{i}"), &format!("q{j}"));
            }
        }
    }

    for r in 0..n_s {
        let mut label = random_formula(&decls, 2, rng);
        if !vals.iter().any(|v| label.evaluate(v)) {
            label = cube(&decls, vals.choose(rng).expect("at least one B-state"));
        }
        if r == 0 && !label.evaluate(&vals[0]) {
            label = label.or(cube(&decls, &vals[0]));
        }
        b = b.s_state(&format!("r{r}"), label);
    }
    b = b.s_init("r0");
    let trans_p = rng.gen_range(0.2..0.6);
    for r in 0..n_s {
        for r2 in 0..n_s {
            if r != r2 && rng.gen_bool(trans_p) {
                let inv = random_formula(&decls, 1, rng);
                b = b.s_transition(&format!("r{r}"), inv, &format!("r{r2}"));
            }
        }
    }
    let sys = b.build().expect("generated system is consistent");
    debug_assert!(sys.check_well_formed().is_ok());
    sys
}

/// The system generated for corpus entry `seed`.
pub fn system_for_seed(seed: u64) -> SBSystem {
    random_system(Bounds::default(), &mut rng_for(seed))
}

/// A random frame with at most `max_states` states and random labels.
pub fn random_kripke<R: Rng>(max_states: usize, rng: &mut R) -> (Kripke, PlainLabels) {
    let n = rng.gen_range(1..=max_states.max(1));
    let p = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let labels =
        PlainLabels { adapting: (0..n).map(|_| rng.gen()).collect(), steady: (0..n).map(|_| rng.gen()).collect() };
    (Kripke::new(n, edges, 0), labels)
}

/// A random CTL formula over `adapting` and `steady` of depth at most `depth`.
pub fn random_ctl<R: Rng>(depth: usize, rng: &mut R) -> CtlFormula {
    use CtlFormula::*;
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..6) {
            0 => Const(rng.gen()),
            1 | 2 => CtlFormula::Atom(self::Atom::Adapting),
            _ => CtlFormula::Atom(self::Atom::Steady),
        };
    }
    let sub = |rng: &mut R| Box::new(random_ctl(depth - 1, rng));
    match rng.gen_range(0..13) {
        0 => Not(sub(rng)),
        1 => And(sub(rng), sub(rng)),
        2 => Or(sub(rng), sub(rng)),
        3 => Implies(sub(rng), sub(rng)),
        4 => AX(sub(rng)),
        5 => EX(sub(rng)),
        6 => AF(sub(rng)),
        7 => EF(sub(rng)),
        8 => AG(sub(rng)),
        9 => EG(sub(rng)),
        10 => AU(sub(rng), sub(rng)),
        11 => EU(sub(rng), sub(rng)),
        _ => Not(sub(rng)),
    }
}

/// Evaluates `f` on corpus entries `0..count` under the given strategy.
pub fn evaluate<R, F>(exec: Exec, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, &SBSystem) -> R + Sync + Send,
{
    exec.map_range(count, |i| {
        let seed = i as u64;
        f(seed, &system_for_seed(seed))
    })
}

/// Smaller variants of `sys`, each obtained by one deletion or simplification.
fn reductions(sys: &SBSystem) -> Vec<SystemBuilder> {
    let base = sys.to_builder();
    let mut out = Vec::new();
    for i in 0..base.s_transitions.len() {
        let mut b = base.clone();
        b.s_transitions.remove(i);
        out.push(b);
    }
    for i in 0..base.b_transitions.len() {
        let mut b = base.clone();
        b.b_transitions.remove(i);
        out.push(b);
    }
    for (name, _) in &base.s_states {
        if *name == base.s_init {
            continue;
        }
        let mut b = base.clone();
        b.s_states.retain(|(n, _)| n != name);
        b.s_transitions.retain(|(f, _, t)| f != name && t != name);
        out.push(b);
    }
    for (name, _) in &base.b_states {
        if *name == base.b_init {
            continue;
        }
        let mut b = base.clone();
        b.b_states.retain(|(n, _)| n != name);
        b.b_transitions.retain(|(f, t)| f != name && t != name);
        out.push(b);
    }
    for i in 0..base.s_transitions.len() {
        if base.s_transitions[i].1 != Formula::Const(true) {
            let mut b = base.clone();
            b.s_transitions[i].1 = Formula::Const(true);
            out.push(b);
        }
    }
    out
}

/// Greedily shrinks `sys` while `still_fails` holds, keeping every
/// intermediate system well-formed.
pub fn shrink(sys: &SBSystem, still_fails: impl Fn(&SBSystem) -> bool) -> SBSystem {
    let mut cur = sys.clone();
    'outer: loop {
        for b in reductions(&cur) {
            let Ok(candidate) = b.build() else { continue };
            if candidate.check_well_formed().is_ok() && still_fails(&candidate) {
                cur = candidate;
                continue 'outer;
            }
        }
        return cur;
    }
}

/// A rough size measure used to compare shrink results.
pub fn size(sys: &SBSystem) -> usize {
    sys.behaviour().len()
        + sys.behaviour().transitions().len()
        + sys.structure().len()
        + sys.structure().transitions().len()
}
