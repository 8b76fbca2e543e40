//! CTL over the flat transition system.
//!
//! Atoms are `adapting`, `steady`, `in(NAME)` (the active S-state is `NAME`)
//! and `@(φ)` (the active B-state satisfies the constraint `φ`). Temporal
//! operators bind like `!`; binary connectives follow the constraint
//! language: `&&` over `||` over right-associative `->`.

mod check;
mod cross;
mod oracle;

use std::fmt;

use thiserror::Error;

use crate::formula::{self, Expr, FormulaError};
use crate::syntax::{self, Cursor, LexError, Tok};

pub use check::{
    check, check_ctl, strong_adaptable_ctl, weak_adaptable_ctl, CheckResult, FlatLabels, Kripke, Labels, PlainLabels,
    Trace,
};
pub use cross::{cross_check, Agreement, CrossCheck};
pub use oracle::{ctl_oracle, oracle};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CtlError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown S-state `{0}` in in(...)")]
    UnknownSState(String),
    #[error("in @(...): {0}")]
    Formula(FormulaError),
    #[error("atom `{0}` is not defined on this model")]
    UnsupportedAtom(String),
}

impl From<LexError> for CtlError {
    fn from(e: LexError) -> Self {
        CtlError::Syntax { pos: e.pos, msg: e.msg }
    }
}

impl From<FormulaError> for CtlError {
    fn from(e: FormulaError) -> Self {
        match e {
            FormulaError::Syntax { pos, msg } => CtlError::Syntax { pos, msg },
            other => CtlError::Formula(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Adapting,
    Steady,
    In(String),
    /// A constraint over the observables, resolved when the formula is checked.
    Obs(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CtlFormula {
    Const(bool),
    Atom(Atom),
    Not(Box<CtlFormula>),
    And(Box<CtlFormula>, Box<CtlFormula>),
    Or(Box<CtlFormula>, Box<CtlFormula>),
    Implies(Box<CtlFormula>, Box<CtlFormula>),
    AX(Box<CtlFormula>),
    EX(Box<CtlFormula>),
    AF(Box<CtlFormula>),
    EF(Box<CtlFormula>),
    AG(Box<CtlFormula>),
    EG(Box<CtlFormula>),
    AU(Box<CtlFormula>, Box<CtlFormula>),
    EU(Box<CtlFormula>, Box<CtlFormula>),
}

/// `EG(adapting -> EF steady)`: some path on which every adapting state can still reach a steady one.
pub fn weak_adaptability_formula() -> CtlFormula {
    use CtlFormula::*;
    EG(Box::new(Implies(Box::new(Atom(self::Atom::Adapting)), Box::new(EF(Box::new(Atom(self::Atom::Steady)))))))
}

/// `AG(adapting -> AF steady)`: along every path, every adapting state inevitably reaches a steady one.
pub fn strong_adaptability_formula() -> CtlFormula {
    use CtlFormula::*;
    AG(Box::new(Implies(Box::new(Atom(self::Atom::Adapting)), Box::new(AF(Box::new(Atom(self::Atom::Steady)))))))
}

pub fn parse_ctl(text: &str) -> Result<CtlFormula, CtlError> {
    let toks = syntax::tokenize(text)?;
    if toks.len() == 1 {
        return Err(CtlError::Syntax { pos: 0, msg: "empty formula".into() });
    }
    let mut cur = Cursor::new(&toks);
    let f = parse_implies(&mut cur)?;
    if *cur.peek() != Tok::Eof {
        return Err(cur.unexpected("operator or end of formula").into());
    }
    Ok(f)
}

fn parse_implies(cur: &mut Cursor<'_>) -> Result<CtlFormula, CtlError> {
    let lhs = parse_or(cur)?;
    if cur.eat(&Tok::Arrow) {
        let rhs = parse_implies(cur)?;
        return Ok(CtlFormula::Implies(Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn parse_or(cur: &mut Cursor<'_>) -> Result<CtlFormula, CtlError> {
    let mut lhs = parse_and(cur)?;
    while cur.eat(&Tok::OrOr) {
        lhs = CtlFormula::Or(Box::new(lhs), Box::new(parse_and(cur)?));
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor<'_>) -> Result<CtlFormula, CtlError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(&Tok::AndAnd) {
        lhs = CtlFormula::And(Box::new(lhs), Box::new(parse_unary(cur)?));
    }
    Ok(lhs)
}

fn parse_until(cur: &mut Cursor<'_>) -> Result<(Box<CtlFormula>, Box<CtlFormula>), CtlError> {
    cur.expect(&Tok::LBracket)?;
    let lhs = parse_implies(cur)?;
    if !cur.is_ident("U") {
        return Err(cur.unexpected("`U`").into());
    }
    cur.bump();
    let rhs = parse_implies(cur)?;
    cur.expect(&Tok::RBracket)?;
    Ok((Box::new(lhs), Box::new(rhs)))
}

fn parse_unary(cur: &mut Cursor<'_>) -> Result<CtlFormula, CtlError> {
    use CtlFormula::*;
    match cur.peek() {
        Tok::Bang => {
            cur.bump();
            Ok(Not(Box::new(parse_unary(cur)?)))
        }
        Tok::LParen => {
            cur.bump();
            let f = parse_implies(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(f)
        }
        Tok::At => {
            cur.bump();
            cur.expect(&Tok::LParen)?;
            let e = formula::parse_implies(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(Atom(self::Atom::Obs(e)))
        }
        Tok::Ident(word) => {
            let unary: Option<fn(Box<CtlFormula>) -> CtlFormula> = match word.as_str() {
                "AX" => Some(AX),
                "EX" => Some(EX),
                "AF" => Some(AF),
                "EF" => Some(EF),
                "AG" => Some(AG),
                "EG" => Some(EG),
                _ => None,
            };
            if let Some(make) = unary {
                cur.bump();
                return Ok(make(Box::new(parse_unary(cur)?)));
            }
            match word.as_str() {
                "A" if *cur.peek_at(1) == Tok::LBracket => {
                    cur.bump();
                    let (a, b) = parse_until(cur)?;
                    Ok(AU(a, b))
                }
                "E" if *cur.peek_at(1) == Tok::LBracket => {
                    cur.bump();
                    let (a, b) = parse_until(cur)?;
                    Ok(EU(a, b))
                }
                "true" => {
                    cur.bump();
                    Ok(Const(true))
                }
                "false" => {
                    cur.bump();
                    Ok(Const(false))
                }
                "adapting" => {
                    cur.bump();
                    Ok(Atom(self::Atom::Adapting))
                }
                "steady" => {
                    cur.bump();
                    Ok(Atom(self::Atom::Steady))
                }
                "in" => {
                    cur.bump();
                    cur.expect(&Tok::LParen)?;
                    let (name, _) = cur.expect_ident()?;
                    cur.expect(&Tok::RParen)?;
                    Ok(Atom(self::Atom::In(name)))
                }
                _ => Err(cur.unexpected("CTL formula").into()),
            }
        }
        _ => Err(cur.unexpected("CTL formula").into()),
    }
}

impl CtlFormula {
    fn prec(&self) -> u8 {
        match self {
            CtlFormula::Implies(..) => 1,
            CtlFormula::Or(..) => 2,
            CtlFormula::And(..) => 3,
            _ => 4,
        }
    }

    fn child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    fn unary(f: &mut fmt::Formatter<'_>, op: &str, g: &CtlFormula) -> fmt::Result {
        f.write_str(op)?;
        if g.prec() < 4 {
            f.write_str(" ")?;
            g.child(f, true)
        } else {
            write!(f, " {g}")
        }
    }

    fn binary(f: &mut fmt::Formatter<'_>, me: u8, op: &str, l: &CtlFormula, r: &CtlFormula) -> fmt::Result {
        let right_assoc = me == 1;
        let lp = if right_assoc { l.prec() <= me } else { l.prec() < me };
        let rp = if right_assoc { r.prec() < me } else { r.prec() <= me };
        l.child(f, lp)?;
        write!(f, " {op} ")?;
        r.child(f, rp)
    }

    /// Nesting depth of operators; atoms and constants have depth 0.
    pub fn depth(&self) -> usize {
        use CtlFormula::*;
        match self {
            Const(_) | Atom(_) => 0,
            Not(g) | AX(g) | EX(g) | AF(g) | EF(g) | AG(g) | EG(g) => 1 + g.depth(),
            And(a, b) | Or(a, b) | Implies(a, b) | AU(a, b) | EU(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Adapting => f.write_str("adapting"),
            Atom::Steady => f.write_str("steady"),
            Atom::In(r) => write!(f, "in({r})"),
            Atom::Obs(e) => write!(f, "@({e})"),
        }
    }
}

impl fmt::Display for CtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CtlFormula::*;
        match self {
            Const(b) => write!(f, "{b}"),
            Atom(a) => write!(f, "{a}"),
            Not(g) => {
                f.write_str("!")?;
                g.child(f, g.prec() < 4)
            }
            And(a, b) => Self::binary(f, 3, "&&", a, b),
            Or(a, b) => Self::binary(f, 2, "||", a, b),
            Implies(a, b) => Self::binary(f, 1, "->", a, b),
            AX(g) => Self::unary(f, "AX", g),
            EX(g) => Self::unary(f, "EX", g),
            AF(g) => Self::unary(f, "AF", g),
            EF(g) => Self::unary(f, "EF", g),
            AG(g) => Self::unary(f, "AG", g),
            EG(g) => Self::unary(f, "EG", g),
            AU(a, b) => write!(f, "A[{a} U {b}]"),
            EU(a, b) => write!(f, "E[{a} U {b}]"),
        }
    }
}
