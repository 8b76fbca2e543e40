use serde::Serialize;

use super::check::{check, FlatLabels, Kripke};
use super::{strong_adaptability_formula, weak_adaptability_formula, CtlFormula};
use crate::adapt::{relation_with, AdaptRelation, Kind};
use crate::exec::Exec;
use crate::flat::FlatLTS;
use crate::model::{BStateId, SBSystem, SStateId};

/// How the relational and temporal-logic verdicts compare for one notion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Agreement {
    pub relational: bool,
    pub ctl: bool,
    /// Reachable steady pairs `(q, r)` on which the two methods differ, ascending.
    #[serde(skip)]
    pub mismatches: Vec<(BStateId, SStateId)>,
}

impl Agreement {
    pub fn agrees(&self) -> bool {
        self.relational == self.ctl && self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrossCheck {
    pub weak: Agreement,
    pub strong: Agreement,
}

impl CrossCheck {
    pub fn agrees(&self) -> bool {
        self.weak.agrees() && self.strong.agrees()
    }
}

/// Compares relation membership with the truth of the matching formula at
/// every reachable flat state `(q, r, ∅)`.
pub fn cross_check(sys: &SBSystem, flat: &FlatLTS, exec: Exec) -> CrossCheck {
    let k = Kripke::from_flat(flat);
    let labels = FlatLabels { sys, flat };
    let one = |kind: Kind, f: CtlFormula| {
        let rel = relation_with(sys, kind, exec);
        let sat = check(&k, &labels, &f).expect("built-in atoms always resolve");
        agreement(flat, &rel, &sat)
    };
    CrossCheck {
        weak: one(Kind::Weak, weak_adaptability_formula()),
        strong: one(Kind::Strong, strong_adaptability_formula()),
    }
}

fn agreement(flat: &FlatLTS, rel: &AdaptRelation, sat: &[bool]) -> Agreement {
    let mut mismatches: Vec<_> = flat
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.pending.is_none())
        .filter(|(i, s)| rel.contains(s.q, s.r) != sat[*i])
        .map(|(_, s)| (s.q, s.r))
        .collect();
    mismatches.sort();
    let init = flat.state(flat.init());
    Agreement { relational: rel.contains(init.q, init.r), ctl: sat[flat.init()], mismatches }
}
