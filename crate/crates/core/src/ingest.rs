//! The `.sbs` model-file format.
//!
//! ```text
//! system "minimal"
//! observables { x: bool; }
//! behaviour { state q0 { x = true } init; }
//! structure { state r0: "x" init; }
//! ```
//!
//! Structure transitions are written `r0 -["invariant"]-> r1;`. Formula
//! payloads use the constraint language of [`crate::formula`].

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::formula::{self, DeclError, Decls, Domain, FormulaError, ObservableDecl, Valuation, Value};
use crate::model::{ModelError, SBSystem, SystemBuilder};
use crate::syntax::{self, line_col, Cursor, LexError, Tok};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{line}:{col}: {kind}")]
    At { line: usize, col: usize, kind: LoadError },
}

impl IngestError {
    pub fn kind(&self) -> Option<&LoadError> {
        match self {
            IngestError::At { kind, .. } => Some(kind),
            IngestError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("{0}")]
    Syntax(String),
    #[error("{what} `{name}` declared twice")]
    Duplicate { what: &'static str, name: String },
    #[error("no {0} is marked init")]
    MissingInit(&'static str),
    #[error("{what} `{name}` is a second init")]
    DuplicateInit { what: &'static str, name: String },
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("undeclared observable `{0}`")]
    UndeclaredObservable(String),
    #[error("`{var}` assigned twice")]
    DuplicateAssignment { var: String },
    #[error("state `{state}` gives no value for `{var}`")]
    MissingValue { state: String, var: String },
    #[error("value `{value}` is outside the domain of `{var}`")]
    Domain { var: String, value: String },
    #[error(transparent)]
    Decl(DeclError),
    #[error(transparent)]
    Formula(FormulaError),
    #[error(transparent)]
    Model(ModelError),
}

/// Reads and parses a model file.
pub fn load_path(path: impl AsRef<Path>) -> Result<SBSystem, IngestError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    load(&text)
}

/// Parses and validates model-file text.
pub fn load(text: &str) -> Result<SBSystem, IngestError> {
    let at = |pos: usize, kind: LoadError| {
        let (line, col) = line_col(text, pos);
        IngestError::At { line, col, kind }
    };
    let toks = syntax::tokenize(text).map_err(|e| at(e.pos, LoadError::Syntax(e.msg)))?;
    let mut p = Parser { cur: Cursor::new(&toks), text };
    p.file().map_err(|(pos, kind)| at(pos, kind))
}

type Fail = (usize, LoadError);

impl From<LexError> for LoadError {
    fn from(e: LexError) -> Self {
        LoadError::Syntax(e.msg)
    }
}

fn syn(e: LexError) -> Fail {
    (e.pos, LoadError::Syntax(e.msg))
}

struct Parser<'t> {
    cur: Cursor<'t>,
    text: &'t str,
}

impl Parser<'_> {
    fn keyword(&mut self, kw: &str) -> Result<usize, Fail> {
        if self.cur.is_ident(kw) {
            Ok(self.cur.bump().pos)
        } else {
            Err(syn(self.cur.unexpected(&format!("`{kw}`"))))
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<usize, Fail> {
        self.cur.expect(&tok).map_err(syn)
    }

    fn ident(&mut self) -> Result<(String, usize), Fail> {
        self.cur.expect_ident().map_err(syn)
    }

    fn string(&mut self) -> Result<(String, usize), Fail> {
        match self.cur.peek() {
            Tok::Str(s) => {
                let s = s.clone();
                Ok((s, self.cur.bump().pos))
            }
            _ => Err(syn(self.cur.unexpected("string"))),
        }
    }

    fn int(&mut self) -> Result<i64, Fail> {
        let neg = self.cur.eat(&Tok::Minus);
        match self.cur.peek() {
            Tok::Int(n) => {
                self.cur.bump();
                Ok(if neg { -n } else { *n })
            }
            _ => Err(syn(self.cur.unexpected("integer"))),
        }
    }

    /// Parses a formula held in a string literal at `pos`, reporting errors
    /// at their offset inside the file.
    fn formula(&self, payload: &str, pos: usize, decls: &Decls) -> Result<formula::Formula, Fail> {
        formula::parse_formula(payload, decls).map_err(|e| {
            let raw = &self.text[pos..];
            let shift = if raw.get(1..=payload.len()) == Some(payload) { pos + 1 } else { pos };
            let e = e.shifted(shift);
            (e.pos(), LoadError::Formula(e))
        })
    }

    fn file(&mut self) -> Result<SBSystem, Fail> {
        self.keyword("system")?;
        let (name, _) = self.string()?;
        let decls = self.observables()?;
        let mut builder = SystemBuilder::new(name, decls);
        self.behaviour(&mut builder)?;
        self.structure(&mut builder)?;
        let end = self.cur.pos();
        if *self.cur.peek() != Tok::Eof {
            return Err(syn(self.cur.unexpected("end of file")));
        }
        builder.build().map_err(|e| (end, LoadError::Model(e)))
    }

    fn observables(&mut self) -> Result<Decls, Fail> {
        let start = self.keyword("observables")?;
        self.expect(Tok::LBrace)?;
        let mut vars = Vec::new();
        while *self.cur.peek() != Tok::RBrace {
            let (name, pos) = self.ident()?;
            self.expect(Tok::Colon)?;
            let domain = self.domain()?;
            self.expect(Tok::Semi)?;
            vars.push((ObservableDecl { name, domain }, pos));
        }
        self.expect(Tok::RBrace)?;
        let positions: Vec<usize> = vars.iter().map(|v| v.1).collect();
        Decls::new(vars.into_iter().map(|v| v.0).collect()).map_err(|e| {
            let culprit = match &e {
                DeclError::Duplicate(n) | DeclError::EmptyEnum(n) => Some(n.clone()),
                DeclError::EmptyRange { name, .. } | DeclError::DuplicateEnumValue { name, .. } => Some(name.clone()),
                _ => None,
            };
            let pos = culprit
                .and_then(|n| {
                    let hits: Vec<usize> =
                        positions.iter().copied().filter(|&p| self.text[p..].starts_with(n.as_str())).collect();
                    hits.last().copied()
                })
                .unwrap_or(start);
            (pos, LoadError::Decl(e))
        })
    }

    fn domain(&mut self) -> Result<Domain, Fail> {
        let (kw, pos) = self.ident()?;
        match kw.as_str() {
            "bool" => Ok(Domain::Bool),
            "int" => {
                self.expect(Tok::LBracket)?;
                let lo = self.int()?;
                self.expect(Tok::DotDot)?;
                let hi = self.int()?;
                self.expect(Tok::RBracket)?;
                Ok(Domain::Int { lo, hi })
            }
            "enum" => {
                self.expect(Tok::LBrace)?;
                let mut vals = vec![self.ident()?.0];
                while self.cur.eat(&Tok::Comma) {
                    vals.push(self.ident()?.0);
                }
                self.expect(Tok::RBrace)?;
                Ok(Domain::Enum(vals))
            }
            other => Err((pos, LoadError::Syntax(format!("expected type, found `{other}`")))),
        }
    }

    fn init_marker(&mut self) -> bool {
        if self.cur.is_ident("init") {
            self.cur.bump();
            true
        } else {
            false
        }
    }

    fn behaviour(&mut self, b: &mut SystemBuilder) -> Result<(), Fail> {
        self.keyword("behaviour")?;
        self.expect(Tok::LBrace)?;
        let mut names = HashSet::new();
        let mut init: Option<String> = None;
        while self.cur.is_ident("state") {
            self.cur.bump();
            let (name, pos) = self.ident()?;
            if !names.insert(name.clone()) {
                return Err((pos, LoadError::Duplicate { what: "B-state", name }));
            }
            let v = self.valuation(&name, &b.observables)?;
            if self.init_marker() {
                if init.is_some() {
                    return Err((pos, LoadError::DuplicateInit { what: "B-state", name }));
                }
                init = Some(name.clone());
            }
            self.expect(Tok::Semi)?;
            b.b_states.push((name, v));
        }
        while let Tok::Ident(_) = self.cur.peek() {
            let (from, pf) = self.ident()?;
            self.expect(Tok::Arrow)?;
            let (to, pt) = self.ident()?;
            self.expect(Tok::Semi)?;
            for (n, p) in [(&from, pf), (&to, pt)] {
                if !names.contains(n) {
                    return Err((p, LoadError::Unknown { what: "B-state", name: n.clone() }));
                }
            }
            b.b_transitions.push((from, to));
        }
        let close = self.expect(Tok::RBrace)?;
        b.b_init = init.ok_or((close, LoadError::MissingInit("B-state")))?;
        Ok(())
    }

    fn valuation(&mut self, state: &str, decls: &Decls) -> Result<Valuation, Fail> {
        let open = self.expect(Tok::LBrace)?;
        let mut vals: Vec<Option<Value>> = vec![None; decls.len()];
        if *self.cur.peek() != Tok::RBrace {
            loop {
                let (var, pos) = self.ident()?;
                let (index, decl) = decls.lookup(&var).ok_or((pos, LoadError::UndeclaredObservable(var.clone())))?;
                self.expect(Tok::Assign)?;
                let vpos = self.cur.pos();
                let value = self
                    .literal(&decl.domain)
                    .map_err(|raw| (vpos, LoadError::Domain { var: var.clone(), value: raw }))?;
                if vals[index].replace(value).is_some() {
                    return Err((pos, LoadError::DuplicateAssignment { var }));
                }
                if !self.cur.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace)?;
        vals.into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    (open, LoadError::MissingValue { state: state.to_string(), var: decls.get(i).name.clone() })
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Valuation)
    }

    /// Reads one literal; on a domain mismatch returns its source text.
    fn literal(&mut self, domain: &Domain) -> Result<Value, String> {
        let neg = self.cur.eat(&Tok::Minus);
        let tok = self.cur.bump().tok.clone();
        let sign = if neg { "-" } else { "" };
        let text = match &tok {
            Tok::Int(n) => format!("{sign}{n}"),
            Tok::Ident(w) => format!("{sign}{w}"),
            other => format!("{sign}{other}"),
        };
        let value = match (&tok, domain) {
            (Tok::Ident(w), Domain::Bool) if !neg && w == "true" => Value::Bool(true),
            (Tok::Ident(w), Domain::Bool) if !neg && w == "false" => Value::Bool(false),
            (Tok::Int(n), Domain::Int { .. }) => Value::Int(if neg { -n } else { *n }),
            (Tok::Ident(w), Domain::Enum(vals)) if !neg => match vals.iter().position(|v| v == w) {
                Some(i) => Value::Enum(i),
                None => return Err(text),
            },
            _ => return Err(text),
        };
        if domain.contains(&value) {
            Ok(value)
        } else {
            Err(text)
        }
    }

    fn structure(&mut self, b: &mut SystemBuilder) -> Result<(), Fail> {
        self.keyword("structure")?;
        self.expect(Tok::LBrace)?;
        let mut names = HashSet::new();
        let mut init: Option<String> = None;
        while self.cur.is_ident("state") {
            self.cur.bump();
            let (name, pos) = self.ident()?;
            if !names.insert(name.clone()) {
                return Err((pos, LoadError::Duplicate { what: "S-state", name }));
            }
            self.expect(Tok::Colon)?;
            let (payload, spos) = self.string()?;
            let label = self.formula(&payload, spos, &b.observables)?;
            if self.init_marker() {
                if init.is_some() {
                    return Err((pos, LoadError::DuplicateInit { what: "S-state", name }));
                }
                init = Some(name.clone());
            }
            self.expect(Tok::Semi)?;
            b.s_states.push((name, label));
        }
        while let Tok::Ident(_) = self.cur.peek() {
            let (from, pf) = self.ident()?;
            self.expect(Tok::Minus)?;
            self.expect(Tok::LBracket)?;
            let (payload, spos) = self.string()?;
            let invariant = self.formula(&payload, spos, &b.observables)?;
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Arrow)?;
            let (to, pt) = self.ident()?;
            self.expect(Tok::Semi)?;
            for (n, p) in [(&from, pf), (&to, pt)] {
                if !names.contains(n) {
                    return Err((p, LoadError::Unknown { what: "S-state", name: n.clone() }));
                }
            }
            b.s_transitions.push((from, invariant, to));
        }
        let close = self.expect(Tok::RBrace)?;
        b.s_init = init.ok_or((close, LoadError::MissingInit("S-state")))?;
        Ok(())
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Writes a block: inline when it holds at most one item, one item per line otherwise.
fn block(out: &mut String, head: &str, items: &[String]) {
    match items {
        [] => writeln!(out, "{head} {{}}").unwrap(),
        [one] => writeln!(out, "{head} {{ {one} }}").unwrap(),
        many => {
            writeln!(out, "{head} {{").unwrap();
            for item in many {
                writeln!(out, "  {item}").unwrap();
            }
            writeln!(out, "}}").unwrap();
        }
    }
}

/// Canonical text for `sys`: states in natural order, transitions sorted.
pub fn save(sys: &SBSystem) -> String {
    let decls = sys.observables();
    let b = sys.behaviour();
    let s = sys.structure();
    let mut out = String::new();
    writeln!(out, "system {}", quote(sys.name())).unwrap();

    let obs: Vec<String> = decls.iter().map(|d| format!("{}: {};", d.name, d.domain)).collect();
    block(&mut out, "observables", &obs);

    let mut beh: Vec<String> = b
        .state_ids()
        .map(|q| {
            let v = sys.observation().get(q);
            let fields: Vec<String> = decls
                .iter()
                .enumerate()
                .map(|(i, d)| format!("{} = {}", d.name, decls.render_value(i, v.get(i))))
                .collect();
            let body = if fields.is_empty() { "{}".to_string() } else { format!("{{ {} }}", fields.join(", ")) };
            let init = if q == b.init() { " init" } else { "" };
            format!("state {} {body}{init};", b.name(q))
        })
        .collect();
    beh.extend(b.transitions().iter().map(|&(f, t)| format!("{} -> {};", b.name(f), b.name(t))));
    block(&mut out, "behaviour", &beh);

    let mut st: Vec<String> = s
        .state_ids()
        .map(|r| {
            let init = if r == s.init() { " init" } else { "" };
            format!("state {}: {}{init};", s.name(r), quote(&s.label(r).to_string()))
        })
        .collect();
    st.extend(
        s.transitions()
            .iter()
            .map(|t| format!("{} -[{}]-> {};", s.name(t.from), quote(&t.invariant.to_string()), s.name(t.to))),
    );
    block(&mut out, "structure", &st);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "system \"minimal\"\nobservables { x: bool; }\nbehaviour { state q0 { x = true } init; }\nstructure { state r0: \"x\" init; }\n";

    fn kind(text: &str) -> (usize, usize, LoadError) {
        match load(text).unwrap_err() {
            IngestError::At { line, col, kind } => (line, col, kind),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minimal_file_is_four_lines_and_canonical() {
        let sys = load(MINIMAL).unwrap();
        assert_eq!(sys.behaviour().len(), 1);
        let text = save(&sys);
        assert_eq!(text, MINIMAL);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn multi_item_blocks_and_round_trip() {
        let src = r#"
            // two states, one adaptation
            system "pair"
            observables { n: int[-1..2]; mode: enum { lo, hi }; ok: bool; }
            behaviour {
              state b { n = 2, mode = hi, ok = false };
              state a { ok = true, mode = lo, n = -1 } init;
              a -> b; b -> a;
            }
            structure {
              state r0: "n < 1 && mode == lo" init;
              state r1: "mode == hi";
              r0 -["ok || n > 0"]-> r1;
            }
        "#;
        let sys = load(src).unwrap();
        let text = save(&sys);
        assert!(text.contains("  state a { n = -1, mode = lo, ok = true } init;\n"));
        assert!(text.contains("  r0 -[\"ok || n > 0\"]-> r1;\n"));
        let again = load(&text).unwrap();
        assert_eq!(again, sys);
        assert_eq!(save(&again), text);
    }

    #[test]
    fn init_errors() {
        let two =
            MINIMAL.replace("state q0 { x = true } init;", "state q0 { x = true } init; state q1 { x = false } init;");
        assert_eq!(kind(&two).2, LoadError::DuplicateInit { what: "B-state", name: "q1".into() });
        let none = MINIMAL.replace("\" init;", "\";");
        assert_eq!(kind(&none).2, LoadError::MissingInit("S-state"));
    }

    #[test]
    fn reference_and_value_errors_carry_positions() {
        let undeclared = MINIMAL.replace("{ x = true }", "{ y = true }");
        assert_eq!(kind(&undeclared), (3, 24, LoadError::UndeclaredObservable("y".into())));
        let domain = MINIMAL.replace("x = true", "x = 3");
        assert_eq!(kind(&domain), (3, 28, LoadError::Domain { var: "x".into(), value: "3".into() }));
        let dup = MINIMAL.replace("init; }\nstructure", "init; state q0 { x = false }; }\nstructure");
        assert!(matches!(kind(&dup).2, LoadError::Duplicate { what: "B-state", .. }));
        let unknown = MINIMAL.replace("init; }\nstructure", "init; q0 -> q9; }\nstructure");
        assert!(matches!(kind(&unknown).2, LoadError::Unknown { what: "B-state", .. }));
        let missing = MINIMAL.replace("x: bool;", "x: bool; y: bool;");
        assert!(matches!(kind(&missing).2, LoadError::MissingValue { .. }));
    }

    #[test]
    fn formula_errors_point_inside_the_string() {
        let bad = MINIMAL.replace("\"x\" init", "\"x && z\" init");
        let (line, col, k) = kind(&bad);
        assert_eq!((line, col), (4, 29));
        assert!(matches!(k, LoadError::Formula(FormulaError::Undeclared { .. })));
        let ill = MINIMAL.replace("\"x\" init", "\"x + 1 > 0\" init");
        assert!(matches!(kind(&ill).2, LoadError::Formula(FormulaError::Type { .. })));
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(kind("system").0, 1);
        let (line, col, _) = kind("system \"s\"\nobservables { x bool; }");
        assert_eq!((line, col), (2, 17));
        assert!(matches!(kind("system \"s\" @").2, LoadError::Syntax(_)));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_path("/nonexistent/model.sbs"), Err(IngestError::Io { .. })));
    }
}
