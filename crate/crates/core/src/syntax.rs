//! Tokenizer shared by the formula, CTL and model-file front ends.

use std::fmt;

/// Byte offset into the source text.
///
/// Positions never take part in structural equality: two ASTs that differ
/// only in where they were parsed from compare equal.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Pos(pub usize);

impl PartialEq for Pos {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl std::hash::Hash for Pos {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl PartialOrd for Pos {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pos {
    fn cmp(&self, _other: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "offset {}", self.0)
    }
}

/// Translates a byte offset into a 1-based `(line, column)` pair.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = match before.rfind('\n') {
        Some(nl) => before[nl + 1..].chars().count() + 1,
        None => before.chars().count() + 1,
    };
    (line, col)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Bang,
    AndAnd,
    OrOr,
    Arrow,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    At,
    Comma,
    Colon,
    Semi,
    Assign,
    DotDot,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Int(n) => return write!(f, "integer `{n}`"),
            Tok::Str(_) => "string literal",
            Tok::Bang => "`!`",
            Tok::AndAnd => "`&&`",
            Tok::OrOr => "`||`",
            Tok::Arrow => "`->`",
            Tok::EqEq => "`==`",
            Tok::NotEq => "`!=`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Gt => "`>`",
            Tok::Ge => "`>=`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::At => "`@`",
            Tok::Comma => "`,`",
            Tok::Colon => "`:`",
            Tok::Semi => "`;`",
            Tok::Assign => "`=`",
            Tok::DotDot => "`..`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub pos: usize,
    pub msg: String,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `src` into tokens. The returned vector always ends with `Tok::Eof`.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if src[i..].starts_with("//") {
            i = src[i..].find('\n').map_or(src.len(), |nl| i + nl);
            continue;
        }
        let start = i;
        if is_ident_start(c) {
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(src[start..i].to_string()), pos: start });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i].parse::<i64>().map_err(|_| LexError {
                pos: start,
                msg: format!("integer literal `{}` out of range", &src[start..i]),
            })?;
            out.push(Token { tok: Tok::Int(n), pos: start });
            continue;
        }
        if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(LexError { pos: start, msg: "unterminated string literal".into() });
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(esc) = src[i..].chars().next() else {
                            return Err(LexError { pos: start, msg: "unterminated string literal".into() });
                        };
                        i += esc.len_utf8();
                        match esc {
                            '"' | '\\' => s.push(esc),
                            other => {
                                return Err(LexError {
                                    pos: i - other.len_utf8() - 1,
                                    msg: format!("unknown escape `\\{other}`"),
                                })
                            }
                        }
                    }
                    ch => s.push(ch),
                }
            }
            out.push(Token { tok: Tok::Str(s), pos: start });
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let (tok, len) = match two {
            "&&" => (Tok::AndAnd, 2),
            "||" => (Tok::OrOr, 2),
            "->" => (Tok::Arrow, 2),
            "==" => (Tok::EqEq, 2),
            "!=" => (Tok::NotEq, 2),
            "<=" => (Tok::Le, 2),
            ">=" => (Tok::Ge, 2),
            ".." => (Tok::DotDot, 2),
            _ => {
                let tok = match c {
                    '!' => Tok::Bang,
                    '<' => Tok::Lt,
                    '>' => Tok::Gt,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '@' => Tok::At,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    '=' => Tok::Assign,
                    other => return Err(LexError { pos: start, msg: format!("unexpected character `{other}`") }),
                };
                (tok, 1)
            }
        };
        i += len;
        out.push(Token { tok, pos: start });
    }
    out.push(Token { tok: Tok::Eof, pos: src.len() });
    Ok(out)
}

/// Cursor over a token vector, used by every recursive-descent parser in the crate.
pub(crate) struct Cursor<'t> {
    toks: &'t [Token],
    at: usize,
}

impl<'t> Cursor<'t> {
    pub fn new(toks: &'t [Token]) -> Self {
        debug_assert!(matches!(toks.last(), Some(Token { tok: Tok::Eof, .. })));
        Cursor { toks, at: 0 }
    }

    pub fn peek(&self) -> &'t Tok {
        &self.toks[self.at].tok
    }

    pub fn peek_at(&self, ahead: usize) -> &'t Tok {
        let i = (self.at + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    pub fn bump(&mut self) -> &'t Token {
        let t = &self.toks[self.at];
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn is_ident(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<usize, LexError> {
        if self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    pub fn expect_ident(&mut self) -> Result<(String, usize), LexError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump().pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    pub fn unexpected(&self, wanted: &str) -> LexError {
        LexError { pos: self.pos(), msg: format!("expected {wanted}, found {}", self.peek()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn longest_match_operators() {
        assert_eq!(
            kinds("a->b<=c..d]->"),
            vec![
                Tok::Ident("a".into()),
                Tok::Arrow,
                Tok::Ident("b".into()),
                Tok::Le,
                Tok::Ident("c".into()),
                Tok::DotDot,
                Tok::Ident("d".into()),
                Tok::RBracket,
                Tok::Arrow,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_strings() {
        let toks = kinds("x // trailing\n\"a \\\"b\\\"\"");
        assert_eq!(toks, vec![Tok::Ident("x".into()), Tok::Str("a \"b\"".into()), Tok::Eof]);
    }

    #[test]
    fn bad_character_has_position() {
        let err = tokenize("a && $").unwrap_err();
        assert_eq!(err.pos, 5);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
