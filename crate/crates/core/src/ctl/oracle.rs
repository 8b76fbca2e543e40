//! A deliberately naive second checker. Every temporal operator is computed
//! by iterating its own fixpoint equation over successor lists, with no
//! dualities and no predecessor indexing.

use super::check::{FlatLabels, Kripke, Labels};
use super::{CtlError, CtlFormula};
use crate::flat::FlatLTS;
use crate::model::SBSystem;

pub fn oracle(k: &Kripke, labels: &dyn Labels, f: &CtlFormula) -> Result<Vec<bool>, CtlError> {
    use CtlFormula::*;
    let n = k.len();
    let sub = |g: &CtlFormula| oracle(k, labels, g);
    Ok(match f {
        Const(b) => vec![*b; n],
        Atom(a) => labels.atom(a)?,
        Not(g) => sub(g)?.iter().map(|x| !x).collect(),
        And(a, b) => {
            let (x, y) = (sub(a)?, sub(b)?);
            (0..n).map(|s| x[s] && y[s]).collect()
        }
        Or(a, b) => {
            let (x, y) = (sub(a)?, sub(b)?);
            (0..n).map(|s| x[s] || y[s]).collect()
        }
        Implies(a, b) => {
            let (x, y) = (sub(a)?, sub(b)?);
            (0..n).map(|s| if x[s] { y[s] } else { true }).collect()
        }
        EX(g) => {
            let x = sub(g)?;
            (0..n).map(|s| some(k, s, &x)).collect()
        }
        AX(g) => {
            let x = sub(g)?;
            (0..n).map(|s| every(k, s, &x)).collect()
        }
        EF(g) => {
            let x = sub(g)?;
            lfp(n, |z, s| x[s] || some(k, s, z))
        }
        AF(g) => {
            let x = sub(g)?;
            lfp(n, |z, s| x[s] || every(k, s, z))
        }
        EG(g) => {
            let x = sub(g)?;
            gfp(n, |z, s| x[s] && some(k, s, z))
        }
        AG(g) => {
            let x = sub(g)?;
            gfp(n, |z, s| x[s] && every(k, s, z))
        }
        EU(a, b) => {
            let (x, y) = (sub(a)?, sub(b)?);
            lfp(n, |z, s| y[s] || (x[s] && some(k, s, z)))
        }
        AU(a, b) => {
            let (x, y) = (sub(a)?, sub(b)?);
            lfp(n, |z, s| y[s] || (x[s] && every(k, s, z)))
        }
    })
}

/// The oracle applied to a flattened system.
pub fn ctl_oracle(sys: &SBSystem, flat: &FlatLTS, f: &CtlFormula) -> Result<Vec<bool>, CtlError> {
    oracle(&Kripke::from_flat(flat), &FlatLabels { sys, flat }, f)
}

fn some(k: &Kripke, s: usize, z: &[bool]) -> bool {
    k.successors(s).iter().any(|&t| z[t])
}

fn every(k: &Kripke, s: usize, z: &[bool]) -> bool {
    k.successors(s).iter().all(|&t| z[t])
}

fn iterate(mut z: Vec<bool>, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    loop {
        let next: Vec<bool> = (0..z.len()).map(|s| step(&z, s)).collect();
        if next == z {
            return z;
        }
        z = next;
    }
}

fn lfp(n: usize, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    iterate(vec![false; n], step)
}

fn gfp(n: usize, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    iterate(vec![true; n], step)
}
