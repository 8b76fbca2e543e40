//! Constraint language over finite-domain observables.
//!
//! Formulas are parsed in two stages. [`parse_expr`] produces an untyped
//! [`Expr`] that only knows the concrete syntax; [`Expr::resolve`] checks it
//! against a set of declarations and yields a typed [`Formula`] whose variable
//! references carry their slot in the [`Valuation`].
//!
//! Precedence, loosest first: `->` (right associative), `||`, `&&`,
//! comparisons, `!`. A negation applies to a whole atom, so `!x == y` reads
//! as `!(x == y)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BStateId, BehaviourMachine, ObservationMap};
use crate::syntax::{self, Cursor, LexError, Pos, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("undeclared variable `{name}` at offset {pos}")]
    Undeclared { name: String, pos: usize },
    #[error("type error at offset {pos}: {msg}")]
    Type { pos: usize, msg: String },
}

impl FormulaError {
    pub fn pos(&self) -> usize {
        match self {
            FormulaError::Syntax { pos, .. }
            | FormulaError::Undeclared { pos, .. }
            | FormulaError::Type { pos, .. } => *pos,
        }
    }

    pub(crate) fn shifted(self, by: usize) -> Self {
        match self {
            FormulaError::Syntax { pos, msg } => FormulaError::Syntax { pos: pos + by, msg },
            FormulaError::Undeclared { name, pos } => FormulaError::Undeclared { name, pos: pos + by },
            FormulaError::Type { pos, msg } => FormulaError::Type { pos: pos + by, msg },
        }
    }
}

impl From<LexError> for FormulaError {
    fn from(e: LexError) -> Self {
        FormulaError::Syntax { pos: e.pos, msg: e.msg }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeclError {
    #[error("observable `{0}` declared twice")]
    Duplicate(String),
    #[error("`{0}` is reserved and cannot name an observable or enum value")]
    Reserved(String),
    #[error("observable `{name}` has empty integer range [{lo}..{hi}]")]
    EmptyRange { name: String, lo: i64, hi: i64 },
    #[error("observable `{0}` has an empty enumeration")]
    EmptyEnum(String),
    #[error("enum value `{value}` listed twice in `{name}`")]
    DuplicateEnumValue { name: String, value: String },
    #[error("enum value `{0}` clashes with an observable name")]
    EnumClash(String),
}

const RESERVED: [&str; 2] = ["true", "false"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Bool,
    Int { lo: i64, hi: i64 },
    Enum(Vec<String>),
}

impl Domain {
    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Domain::Bool, Value::Bool(_)) => true,
            (Domain::Int { lo, hi }, Value::Int(n)) => lo <= n && n <= hi,
            (Domain::Enum(vals), Value::Enum(i)) => *i < vals.len(),
            _ => false,
        }
    }

    /// Every value of the domain, in ascending order.
    pub fn values(&self) -> Vec<Value> {
        match self {
            Domain::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Domain::Int { lo, hi } => (*lo..=*hi).map(Value::Int).collect(),
            Domain::Enum(vals) => (0..vals.len()).map(Value::Enum).collect(),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Bool => f.write_str("bool"),
            Domain::Int { lo, hi } => write!(f, "int[{lo}..{hi}]"),
            Domain::Enum(vals) => write!(f, "enum {{ {} }}", vals.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservableDecl {
    pub name: String,
    pub domain: Domain,
}

/// An ordered, validated set of observable declarations.
#[derive(Debug, Clone, Default)]
pub struct Decls {
    vars: Vec<ObservableDecl>,
    by_name: HashMap<String, usize>,
}

impl PartialEq for Decls {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars
    }
}

impl Decls {
    pub fn new(vars: Vec<ObservableDecl>) -> Result<Self, DeclError> {
        let mut by_name = HashMap::new();
        for (i, d) in vars.iter().enumerate() {
            if RESERVED.contains(&d.name.as_str()) {
                return Err(DeclError::Reserved(d.name.clone()));
            }
            if by_name.insert(d.name.clone(), i).is_some() {
                return Err(DeclError::Duplicate(d.name.clone()));
            }
            match &d.domain {
                Domain::Bool => {}
                Domain::Int { lo, hi } => {
                    if lo > hi {
                        return Err(DeclError::EmptyRange { name: d.name.clone(), lo: *lo, hi: *hi });
                    }
                }
                Domain::Enum(vals) => {
                    if vals.is_empty() {
                        return Err(DeclError::EmptyEnum(d.name.clone()));
                    }
                    let mut seen = BTreeSet::new();
                    for v in vals {
                        if RESERVED.contains(&v.as_str()) {
                            return Err(DeclError::Reserved(v.clone()));
                        }
                        if !seen.insert(v) {
                            return Err(DeclError::DuplicateEnumValue { name: d.name.clone(), value: v.clone() });
                        }
                    }
                }
            }
        }
        for d in &vars {
            if let Domain::Enum(vals) = &d.domain {
                if let Some(v) = vals.iter().find(|v| by_name.contains_key(*v)) {
                    return Err(DeclError::EnumClash(v.clone()));
                }
            }
        }
        Ok(Decls { vars, by_name })
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObservableDecl> {
        self.vars.iter()
    }

    pub fn get(&self, index: usize) -> &ObservableDecl {
        &self.vars[index]
    }

    pub fn lookup(&self, name: &str) -> Option<(usize, &ObservableDecl)> {
        self.by_name.get(name).map(|&i| (i, &self.vars[i]))
    }

    /// Renders a single value in model-file syntax.
    pub fn render_value(&self, index: usize, v: &Value) -> String {
        match (v, &self.vars[index].domain) {
            (Value::Enum(i), Domain::Enum(vals)) => vals.get(*i).cloned().unwrap_or_else(|| format!("#{i}")),
            (v, _) => v.to_string(),
        }
    }

    /// Iterates every total valuation over these declarations.
    pub fn all_valuations(&self) -> Vec<Valuation> {
        let mut out = vec![Vec::new()];
        for d in &self.vars {
            let vals = d.domain.values();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push(v.clone());
                        next
                    })
                })
                .collect();
        }
        out.into_iter().map(Valuation).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    /// Index into the variable's enumeration.
    Enum(usize),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Enum(i) => write!(f, "#{i}"),
        }
    }
}

/// Values for every declared observable, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Valuation(pub Vec<Value>);

impl Valuation {
    pub fn get(&self, index: usize) -> &Value {
        &self.0[index]
    }

    /// Checks totality and domain membership against `decls`.
    pub fn conforms_to(&self, decls: &Decls) -> bool {
        self.0.len() == decls.len() && decls.iter().zip(&self.0).all(|(d, v)| d.domain.contains(v))
    }

    pub fn display<'a>(&'a self, decls: &'a Decls) -> impl fmt::Display + 'a {
        DisplayValuation { v: self, decls }
    }
}

struct DisplayValuation<'a> {
    v: &'a Valuation,
    decls: &'a Decls,
}

impl fmt::Display for DisplayValuation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, val) in self.v.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(&self.decls.render_value(i, val))?;
        }
        f.write_str(")")
    }
}

// ---------------------------------------------------------------------------
// Shared operators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn from_tok(t: &Tok) -> Option<CmpOp> {
        Some(match t {
            Tok::EqEq => CmpOp::Eq,
            Tok::NotEq => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    fn apply<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
        }
    }
}

// ---------------------------------------------------------------------------
// Untyped syntax

#[derive(Debug, Clone, PartialEq)]
pub enum RawOperand {
    Int(i64, Pos),
    Name(String, Pos),
}

impl RawOperand {
    fn pos(&self) -> usize {
        match self {
            RawOperand::Int(_, p) | RawOperand::Name(_, p) => p.0,
        }
    }
}

/// A left-to-right chain `a + b - c ...`; the grammar has no parentheses in terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTerm {
    pub head: RawOperand,
    pub tail: Vec<(ArithOp, RawOperand)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(bool),
    Name(String, Pos),
    Compare { op: CmpOp, lhs: RawTerm, rhs: RawTerm, pos: Pos },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

/// Parses a complete formula without resolving names.
pub fn parse_expr(text: &str) -> Result<Expr, FormulaError> {
    let toks = syntax::tokenize(text)?;
    if toks.len() == 1 {
        return Err(FormulaError::Syntax { pos: 0, msg: "empty formula".into() });
    }
    let mut cur = Cursor::new(&toks);
    let e = parse_implies(&mut cur)?;
    if *cur.peek() != Tok::Eof {
        return Err(cur.unexpected("operator or end of formula").into());
    }
    Ok(e)
}

/// Parses and type-checks `text` against `decls`.
pub fn parse_formula(text: &str, decls: &Decls) -> Result<Formula, FormulaError> {
    parse_expr(text)?.resolve(decls)
}

pub(crate) fn parse_implies(cur: &mut Cursor<'_>) -> Result<Expr, FormulaError> {
    let lhs = parse_or(cur)?;
    if cur.eat(&Tok::Arrow) {
        let rhs = parse_implies(cur)?;
        return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
    }
    Ok(lhs)
}

fn parse_or(cur: &mut Cursor<'_>) -> Result<Expr, FormulaError> {
    let mut lhs = parse_and(cur)?;
    while cur.eat(&Tok::OrOr) {
        let rhs = parse_and(cur)?;
        lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_and(cur: &mut Cursor<'_>) -> Result<Expr, FormulaError> {
    let mut lhs = parse_unary(cur)?;
    while cur.eat(&Tok::AndAnd) {
        let rhs = parse_unary(cur)?;
        lhs = Expr::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_unary(cur: &mut Cursor<'_>) -> Result<Expr, FormulaError> {
    match cur.peek() {
        Tok::Bang => {
            cur.bump();
            Ok(Expr::Not(Box::new(parse_unary(cur)?)))
        }
        Tok::LParen => {
            cur.bump();
            let e = parse_implies(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        _ => parse_atom(cur),
    }
}

fn parse_operand(cur: &mut Cursor<'_>) -> Result<RawOperand, FormulaError> {
    let pos = Pos(cur.pos());
    match cur.peek() {
        Tok::Int(n) => {
            let n = *n;
            cur.bump();
            Ok(RawOperand::Int(n, pos))
        }
        Tok::Ident(s) => {
            let s = s.clone();
            cur.bump();
            Ok(RawOperand::Name(s, pos))
        }
        _ => Err(cur.unexpected("formula").into()),
    }
}

fn parse_term(cur: &mut Cursor<'_>) -> Result<RawTerm, FormulaError> {
    let head = parse_operand(cur)?;
    let mut tail = Vec::new();
    loop {
        let op = match cur.peek() {
            Tok::Plus => ArithOp::Add,
            Tok::Minus => ArithOp::Sub,
            _ => break,
        };
        cur.bump();
        tail.push((op, parse_operand(cur)?));
    }
    Ok(RawTerm { head, tail })
}

fn parse_atom(cur: &mut Cursor<'_>) -> Result<Expr, FormulaError> {
    let pos = Pos(cur.pos());
    let lhs = parse_term(cur)?;
    if let Some(op) = CmpOp::from_tok(cur.peek()) {
        cur.bump();
        let rhs = parse_term(cur)?;
        return Ok(Expr::Compare { op, lhs, rhs, pos });
    }
    if !lhs.tail.is_empty() {
        return Err(cur.unexpected("comparison operator").into());
    }
    match lhs.head {
        RawOperand::Name(s, _) if s == "true" || s == "false" => Ok(Expr::Const(s == "true")),
        RawOperand::Name(s, p) => Ok(Expr::Name(s, p)),
        RawOperand::Int(_, p) => {
            Err(FormulaError::Syntax { pos: p.0, msg: "an integer is not a formula; expected a comparison".into() })
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Implies = 1,
    Or = 2,
    And = 3,
    Unary = 4,
}

impl Expr {
    fn prec(&self) -> Prec {
        match self {
            Expr::Implies(..) => Prec::Implies,
            Expr::Or(..) => Prec::Or,
            Expr::And(..) => Prec::And,
            _ => Prec::Unary,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    fn fmt_binary(f: &mut fmt::Formatter<'_>, me: Prec, op: &str, l: &Expr, r: &Expr) -> fmt::Result {
        let right_assoc = me == Prec::Implies;
        let lp = if right_assoc { l.prec() <= me } else { l.prec() < me };
        let rp = if right_assoc { r.prec() < me } else { r.prec() <= me };
        l.fmt_child(f, lp)?;
        write!(f, " {op} ")?;
        r.fmt_child(f, rp)
    }

    /// Resolves names against `decls` and type-checks the result.
    pub fn resolve(&self, decls: &Decls) -> Result<Formula, FormulaError> {
        Ok(match self {
            Expr::Const(b) => Formula::Const(*b),
            Expr::Name(name, pos) => match decls.lookup(name) {
                Some((index, d)) if d.domain == Domain::Bool => Formula::Atom(Var { name: name.clone(), index }),
                Some((_, d)) => {
                    return Err(FormulaError::Type {
                        pos: pos.0,
                        msg: format!("`{name}` has type {} and cannot stand alone as a formula", d.domain),
                    })
                }
                None => return Err(FormulaError::Undeclared { name: name.clone(), pos: pos.0 }),
            },
            Expr::Compare { op, lhs, rhs, pos } => Formula::Compare(resolve_comparison(*op, lhs, rhs, pos.0, decls)?),
            Expr::Not(e) => Formula::Not(Box::new(e.resolve(decls)?)),
            Expr::And(a, b) => Formula::And(Box::new(a.resolve(decls)?), Box::new(b.resolve(decls)?)),
            Expr::Or(a, b) => Formula::Or(Box::new(a.resolve(decls)?), Box::new(b.resolve(decls)?)),
            Expr::Implies(a, b) => Formula::Implies(Box::new(a.resolve(decls)?), Box::new(b.resolve(decls)?)),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::Name(n, _) => f.write_str(n),
            Expr::Compare { op, lhs, rhs, .. } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Expr::Not(e) => {
                f.write_str("!")?;
                let parens = !matches!(**e, Expr::Const(_) | Expr::Name(..) | Expr::Not(_));
                e.fmt_child(f, parens)
            }
            Expr::And(a, b) => Expr::fmt_binary(f, Prec::And, "&&", a, b),
            Expr::Or(a, b) => Expr::fmt_binary(f, Prec::Or, "||", a, b),
            Expr::Implies(a, b) => Expr::fmt_binary(f, Prec::Implies, "->", a, b),
        }
    }
}

impl fmt::Display for RawOperand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawOperand::Int(n, _) => write!(f, "{n}"),
            RawOperand::Name(s, _) => f.write_str(s),
        }
    }
}

impl fmt::Display for RawTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        for (op, o) in &self.tail {
            write!(f, " {} {o}", op.symbol())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Typed formulas

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Var {
    pub name: String,
    /// Slot in the valuation.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    /// Non-negative; negative constants are written as `0 - n`.
    Int(i64),
    Bool(bool),
    Var(Var),
    EnumValue {
        name: String,
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub head: Operand,
    pub tail: Vec<(ArithOp, Operand)>,
}

impl Term {
    pub fn single(o: Operand) -> Self {
        Term { head: o, tail: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub op: CmpOp,
    pub lhs: Term,
    pub rhs: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    /// A boolean observable used as a formula.
    Atom(Var),
    Compare(Comparison),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty<'d> {
    Int,
    Bool,
    Enum(&'d [String]),
}

impl fmt::Display for Ty<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => f.write_str("int"),
            Ty::Bool => f.write_str("bool"),
            Ty::Enum(vals) => write!(f, "enum {{ {} }}", vals.join(", ")),
        }
    }
}

/// An operand whose type is known, or a bare name that is not a variable.
enum Typed<'d> {
    Known(Operand, Ty<'d>),
    Unresolved(String, usize),
}

fn type_operand<'d>(o: &RawOperand, decls: &'d Decls) -> Typed<'d> {
    match o {
        RawOperand::Int(n, _) => Typed::Known(Operand::Int(*n), Ty::Int),
        RawOperand::Name(s, p) => match decls.lookup(s) {
            Some((index, d)) => {
                let ty = match &d.domain {
                    Domain::Bool => Ty::Bool,
                    Domain::Int { .. } => Ty::Int,
                    Domain::Enum(vals) => Ty::Enum(vals),
                };
                Typed::Known(Operand::Var(Var { name: s.clone(), index }), ty)
            }
            None if s == "true" || s == "false" => Typed::Known(Operand::Bool(s == "true"), Ty::Bool),
            None => Typed::Unresolved(s.clone(), p.0),
        },
    }
}

enum Side<'d> {
    Typed(Term, Ty<'d>),
    Bare(String, usize),
}

fn resolve_side<'d>(t: &RawTerm, decls: &'d Decls) -> Result<Side<'d>, FormulaError> {
    if t.tail.is_empty() {
        return Ok(match type_operand(&t.head, decls) {
            Typed::Known(o, ty) => Side::Typed(Term::single(o), ty),
            Typed::Unresolved(name, pos) => Side::Bare(name, pos),
        });
    }
    let int_operand = |raw: &RawOperand| match type_operand(raw, decls) {
        Typed::Known(o, Ty::Int) => Ok(o),
        Typed::Known(_, ty) => {
            Err(FormulaError::Type { pos: raw.pos(), msg: format!("arithmetic on `{raw}` of type {ty}") })
        }
        Typed::Unresolved(name, pos) => Err(FormulaError::Undeclared { name, pos }),
    };
    let head = int_operand(&t.head)?;
    let tail = t.tail.iter().map(|(op, o)| Ok((*op, int_operand(o)?))).collect::<Result<Vec<_>, FormulaError>>()?;
    Ok(Side::Typed(Term { head, tail }, Ty::Int))
}

fn enum_literal(op: CmpOp, vals: &[String], name: String, pos: usize, decls: &Decls) -> Result<Term, FormulaError> {
    match vals.iter().position(|v| *v == name) {
        Some(index) if op.is_equality() => Ok(Term::single(Operand::EnumValue { name, index })),
        Some(_) => {
            Err(FormulaError::Type { pos, msg: format!("enum values only support == and !=, not {}", op.symbol()) })
        }
        None => {
            let known_elsewhere = decls.iter().any(|d| matches!(&d.domain, Domain::Enum(vs) if vs.contains(&name)));
            if known_elsewhere {
                Err(FormulaError::Type { pos, msg: format!("`{name}` belongs to a different enumeration") })
            } else {
                Err(FormulaError::Undeclared { name, pos })
            }
        }
    }
}

fn resolve_comparison(
    op: CmpOp,
    lhs: &RawTerm,
    rhs: &RawTerm,
    pos: usize,
    decls: &Decls,
) -> Result<Comparison, FormulaError> {
    let (lhs, rhs) = match (resolve_side(lhs, decls)?, resolve_side(rhs, decls)?) {
        (Side::Typed(l, lty), Side::Typed(r, rty)) => {
            let ok = match (lty, rty) {
                (Ty::Int, Ty::Int) => true,
                (Ty::Bool, Ty::Bool) => op.is_equality(),
                (Ty::Enum(a), Ty::Enum(b)) => a == b && op.is_equality(),
                _ => false,
            };
            if !ok {
                return Err(FormulaError::Type { pos, msg: format!("cannot compare {lty} {} {rty}", op.symbol()) });
            }
            (l, r)
        }
        (Side::Typed(l, Ty::Enum(vals)), Side::Bare(name, p)) => {
            let r = enum_literal(op, vals, name, p, decls)?;
            (l, r)
        }
        (Side::Bare(name, p), Side::Typed(r, Ty::Enum(vals))) => {
            let l = enum_literal(op, vals, name, p, decls)?;
            (l, r)
        }
        (Side::Bare(name, p), _) | (_, Side::Bare(name, p)) => {
            return Err(FormulaError::Undeclared { name, pos: p });
        }
    };
    Ok(Comparison { op, lhs, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scalar {
    Int(i128),
    Bool(bool),
    Enum(usize),
}

impl Operand {
    fn to_raw(&self) -> RawOperand {
        match self {
            Operand::Int(n) => RawOperand::Int(*n, Pos::default()),
            Operand::Bool(b) => RawOperand::Name(b.to_string(), Pos::default()),
            Operand::Var(v) => RawOperand::Name(v.name.clone(), Pos::default()),
            Operand::EnumValue { name, .. } => RawOperand::Name(name.clone(), Pos::default()),
        }
    }

    fn eval(&self, v: &Valuation) -> Scalar {
        match self {
            Operand::Int(n) => Scalar::Int(*n as i128),
            Operand::Bool(b) => Scalar::Bool(*b),
            Operand::EnumValue { index, .. } => Scalar::Enum(*index),
            Operand::Var(var) => match v.get(var.index) {
                Value::Int(n) => Scalar::Int(*n as i128),
                Value::Bool(b) => Scalar::Bool(*b),
                Value::Enum(i) => Scalar::Enum(*i),
            },
        }
    }
}

impl Term {
    fn to_raw(&self) -> RawTerm {
        RawTerm { head: self.head.to_raw(), tail: self.tail.iter().map(|(op, o)| (*op, o.to_raw())).collect() }
    }

    // Each operand fits in i64 and a chain has fewer than 2^63 operands, so
    // the i128 sum cannot overflow.
    fn eval(&self, v: &Valuation) -> Scalar {
        let head = self.head.eval(v);
        if self.tail.is_empty() {
            return head;
        }
        let as_int = |s: Scalar| match s {
            Scalar::Int(n) => n,
            _ => unreachable!("type checker admits only integers in arithmetic"),
        };
        let mut acc = as_int(head);
        for (op, o) in &self.tail {
            let x = as_int(o.eval(v));
            acc = match op {
                ArithOp::Add => acc + x,
                ArithOp::Sub => acc - x,
            };
        }
        Scalar::Int(acc)
    }
}

impl Formula {
    pub fn to_expr(&self) -> Expr {
        match self {
            Formula::Const(b) => Expr::Const(*b),
            Formula::Atom(v) => Expr::Name(v.name.clone(), Pos::default()),
            Formula::Compare(c) => {
                Expr::Compare { op: c.op, lhs: c.lhs.to_raw(), rhs: c.rhs.to_raw(), pos: Pos::default() }
            }
            Formula::Not(f) => Expr::Not(Box::new(f.to_expr())),
            Formula::And(a, b) => Expr::And(Box::new(a.to_expr()), Box::new(b.to_expr())),
            Formula::Or(a, b) => Expr::Or(Box::new(a.to_expr()), Box::new(b.to_expr())),
            Formula::Implies(a, b) => Expr::Implies(Box::new(a.to_expr()), Box::new(b.to_expr())),
        }
    }

    /// Truth value under `v`, which must be total over the formula's variables.
    pub fn evaluate(&self, v: &Valuation) -> bool {
        match self {
            Formula::Const(b) => *b,
            Formula::Atom(var) => matches!(v.get(var.index), Value::Bool(true)),
            Formula::Compare(c) => c.op.apply(c.lhs.eval(v), c.rhs.eval(v)),
            Formula::Not(f) => !f.evaluate(v),
            Formula::And(a, b) => a.evaluate(v) && b.evaluate(v),
            Formula::Or(a, b) => a.evaluate(v) || b.evaluate(v),
            Formula::Implies(a, b) => !a.evaluate(v) || b.evaluate(v),
        }
    }

    /// Names of the variables occurring in the formula.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        let mut term = |t: &Term| {
            for o in std::iter::once(&t.head).chain(t.tail.iter().map(|(_, o)| o)) {
                if let Operand::Var(v) = o {
                    out.insert(v.name.clone());
                }
            }
        };
        match self {
            Formula::Const(_) => {}
            Formula::Atom(v) => {
                out.insert(v.name.clone());
            }
            Formula::Compare(c) => {
                term(&c.lhs);
                term(&c.rhs);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Formula {
        Formula::Not(Box::new(self))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_expr().fmt(f)
    }
}

/// The B-states whose observation satisfies `phi`, in ascending id order.
pub fn sat_set(phi: &Formula, behaviour: &BehaviourMachine, observation: &ObservationMap) -> Vec<BStateId> {
    behaviour.state_ids().filter(|&q| phi.evaluate(observation.get(q))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn predator_decls() -> Decls {
        Decls::new(vec![
            ObservableDecl { name: "p".into(), domain: Domain::Int { lo: 0, hi: 1 } },
            ObservableDecl { name: "a0".into(), domain: Domain::Int { lo: 0, hi: 1 } },
            ObservableDecl { name: "a1".into(), domain: Domain::Int { lo: 0, hi: 1 } },
            ObservableDecl { name: "eat".into(), domain: Domain::Bool },
            ObservableDecl { name: "moved".into(), domain: Domain::Bool },
        ])
        .unwrap()
    }

    fn val(p: i64, a0: i64, a1: i64, eat: bool, moved: bool) -> Valuation {
        Valuation(vec![Value::Int(p), Value::Int(a0), Value::Int(a1), Value::Bool(eat), Value::Bool(moved)])
    }

    const L_R0: &str = "p==0 && (!eat -> a0>0) && !moved";

    #[test]
    fn region_r0_label_is_a_three_way_conjunction() {
        let f = parse_formula(L_R0, &predator_decls()).unwrap();
        let Formula::And(lhs, rhs) = &f else { panic!("expected conjunction, got {f:?}") };
        assert!(matches!(**rhs, Formula::Not(_)));
        let Formula::And(first, second) = &**lhs else { panic!() };
        assert!(matches!(**first, Formula::Compare(_)));
        assert!(matches!(**second, Formula::Implies(..)));
        assert_eq!(f.to_string(), "p == 0 && (!eat -> a0 > 0) && !moved");
    }

    #[test]
    fn constant_true() {
        assert_eq!(parse_formula("true", &predator_decls()).unwrap(), Formula::Const(true));
    }

    #[test]
    fn undeclared_variable_is_reported() {
        let err = parse_formula("p == q0", &predator_decls()).unwrap_err();
        assert_eq!(err, FormulaError::Undeclared { name: "q0".into(), pos: 5 });
    }

    #[test]
    fn initial_state_satisfies_r0() {
        let f = parse_formula(L_R0, &predator_decls()).unwrap();
        assert!(f.evaluate(&val(0, 1, 1, true, false)));
    }

    #[test]
    fn simple_evaluations() {
        let d = predator_decls();
        assert!(!parse_formula("moved", &d).unwrap().evaluate(&val(0, 1, 1, true, false)));
        assert!(!parse_formula("!eat -> a0>0", &d).unwrap().evaluate(&val(0, 0, 1, false, false)));
    }

    #[test]
    fn free_variables() {
        let d = predator_decls();
        let names = |s: &str| parse_formula(s, &d).unwrap().free_vars().into_iter().collect::<Vec<_>>();
        assert_eq!(names("moved"), vec!["moved"]);
        assert!(names("true").is_empty());
        assert_eq!(names("p==0 && a0>0"), vec!["a0", "p"]);
    }

    #[test]
    fn precedence_and_associativity() {
        let d = predator_decls();
        let f = parse_formula("eat -> moved -> eat || moved && eat", &d).unwrap();
        let Formula::Implies(_, rest) = &f else { panic!() };
        let Formula::Implies(_, rest) = &**rest else { panic!() };
        assert!(matches!(**rest, Formula::Or(..)));
        assert_eq!(f.to_string(), "eat -> moved -> eat || moved && eat");
        let g = parse_formula("(eat -> moved) -> eat", &d).unwrap();
        assert_eq!(g.to_string(), "(eat -> moved) -> eat");
        let n = parse_formula("!p == 1", &d).unwrap();
        assert_eq!(n.to_string(), "!(p == 1)");
    }

    #[test]
    fn type_errors() {
        let d = predator_decls();
        assert!(matches!(parse_formula("p", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("eat < moved", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("p == eat", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("eat + 1 == 2", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("3", &d), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("", &d), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("p == 1 )", &d), Err(FormulaError::Syntax { pos: 7, .. })));
    }

    #[test]
    fn arithmetic_does_not_wrap() {
        let d = Decls::new(vec![ObservableDecl { name: "x".into(), domain: Domain::Int { lo: 0, hi: 3 } }]).unwrap();
        let f = parse_formula("x + 9223372036854775807 + 9223372036854775807 > 9223372036854775807", &d).unwrap();
        assert!(f.evaluate(&Valuation(vec![Value::Int(0)])));
        let g = parse_formula("x - 2 < 0", &d).unwrap();
        assert!(g.evaluate(&Valuation(vec![Value::Int(1)])));
    }

    #[test]
    fn enums_compare_by_equality_only() {
        let d = Decls::new(vec![
            ObservableDecl { name: "mode".into(), domain: Domain::Enum(vec!["idle".into(), "busy".into()]) },
            ObservableDecl { name: "other".into(), domain: Domain::Enum(vec!["busy".into(), "off".into()]) },
        ])
        .unwrap();
        let f = parse_formula("mode == busy", &d).unwrap();
        assert!(f.evaluate(&Valuation(vec![Value::Enum(1), Value::Enum(0)])));
        assert!(matches!(parse_formula("mode < busy", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("mode == off", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("mode == other", &d), Err(FormulaError::Type { .. })));
        assert!(matches!(parse_formula("mode == nope", &d), Err(FormulaError::Undeclared { .. })));
    }

    #[test]
    fn bool_literals_in_comparisons() {
        let d = predator_decls();
        let f = parse_formula("eat == true", &d).unwrap();
        assert!(f.evaluate(&val(0, 0, 0, true, false)));
        assert_eq!(f.to_string(), "eat == true");
    }

    #[test]
    fn declaration_errors() {
        let b = |n: &str| ObservableDecl { name: n.into(), domain: Domain::Bool };
        assert_eq!(Decls::new(vec![b("x"), b("x")]).unwrap_err(), DeclError::Duplicate("x".into()));
        assert_eq!(Decls::new(vec![b("true")]).unwrap_err(), DeclError::Reserved("true".into()));
        assert!(matches!(
            Decls::new(vec![ObservableDecl { name: "n".into(), domain: Domain::Int { lo: 2, hi: 1 } }]),
            Err(DeclError::EmptyRange { .. })
        ));
        assert!(matches!(
            Decls::new(vec![b("x"), ObservableDecl { name: "e".into(), domain: Domain::Enum(vec!["x".into()]) }]),
            Err(DeclError::EnumClash(_))
        ));
    }

    #[test]
    fn implication_matches_disjunction_exhaustively() {
        let d = predator_decls();
        let pairs = [("eat", "moved"), ("p == 0", "a0 > 0"), ("!eat && a1 == 1", "p != a0")];
        for (a, b) in pairs {
            let imp = parse_formula(&format!("({a}) -> ({b})"), &d).unwrap();
            let dis = parse_formula(&format!("!({a}) || ({b})"), &d).unwrap();
            for v in d.all_valuations() {
                assert_eq!(imp.evaluate(&v), dis.evaluate(&v), "{a} -> {b} at {v:?}");
            }
        }
    }
}
