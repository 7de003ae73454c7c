//! Text languages: fact files, rules, policies and aggregation queries.
//!
//! All four share one line-oriented lexer. Lines whose first non-blank
//! character is `#` are comments. Parse errors carry a 1-based
//! [`SourceSpan`] that points into the offending token.

mod ast;
mod facts;
mod policies;
mod query;
mod rules;

pub use ast::{Constraint, Pattern, Term, WhereClause};
pub use facts::{
    parse_facts, parse_facts_with, serialize_fact, serialize_fact_with, serialize_facts,
    DEFAULT_SOURCE,
};
pub use policies::{
    parse_policies, serialize_policies, serialize_policy, Condition, OnViolation, PolicyAst,
    Severity,
};
pub use query::{parse_query, serialize_query, QueryAst, QueryOp, RankKey, ANCHOR, THIS};
pub use rules::{
    parse_rules, serialize_rule, serialize_rules, AbsentClause, MatchClause, RuleAst, Scope,
};

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Option<String>,
}

impl ParseError {
    pub(crate) fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected: None,
        }
    }

    pub(crate) fn expected(mut self, what: impl Into<String>) -> Self {
        self.expected = Some(what.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    At,
    Eq,
    Ge,
    Question,
    Star,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(_) => "string".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::At => "`@`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Question => "`?`".into(),
            Tok::Star => "`*`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

/// Source lines with comment and blank lines dropped: `(line_no, text)`.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n').enumerate().filter_map(|(i, l)| {
        let l = l.strip_suffix('\r').unwrap_or(l);
        let trimmed = l.trim_start();
        (!trimmed.is_empty() && !trimmed.starts_with('#')).then_some((i + 1, l))
    })
}

pub(crate) fn lex_line(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let span = |start: usize, len: usize| SourceSpan {
        line: line_no,
        column: start + 1,
        length: len,
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '@' => Some(Tok::At),
            '=' => Some(Tok::Eq),
            '?' => Some(Tok::Question),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token {
                tok,
                span: span(start, 1),
            });
            i += 1;
            continue;
        }
        if c == '>' {
            if chars.get(i + 1) == Some(&'=') {
                out.push(Token {
                    tok: Tok::Ge,
                    span: span(start, 2),
                });
                i += 2;
                continue;
            }
            return Err(ParseError::new(span(start, 1), "unexpected `>`").expected("`>=`"));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span: span(start, i - start),
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                let mut j = i + 1;
                if matches!(chars.get(j), Some('+' | '-')) {
                    j += 1;
                }
                if chars.get(j).is_some_and(|d| d.is_ascii_digit()) {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            if chars
                .get(i)
                .is_some_and(|d| d.is_ascii_alphabetic() || *d == '_')
            {
                return Err(ParseError::new(
                    span(start, i + 1 - start),
                    "malformed number",
                ));
            }
            out.push(Token {
                tok: Tok::Number(chars[start..i].iter().collect()),
                span: span(start, i - start),
            });
            continue;
        }
        if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError::new(
                            span(start, i - start),
                            "unterminated string",
                        ))
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => {
                                return Err(ParseError::new(
                                    span(i, 2.min(chars.len() - i)),
                                    "invalid escape",
                                ))
                            }
                        };
                        s.push(esc);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                span: span(start, i - start),
            });
            continue;
        }
        return Err(ParseError::new(
            span(start, 1),
            format!("unexpected character `{c}`"),
        ));
    }
    Ok(out)
}

/// Token cursor over one statement.
pub(crate) struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    fallback: SourceSpan,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(toks: &'a [Token], fallback: SourceSpan) -> Self {
        Cursor {
            toks,
            pos: 0,
            fallback,
        }
    }

    pub(crate) fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    pub(crate) fn peek_tok(&self) -> Option<&'a Tok> {
        self.peek().map(|t| &t.tok)
    }

    pub(crate) fn peek_ident(&self) -> Option<&'a str> {
        match self.peek_tok() {
            Some(Tok::Ident(s)) => Some(s),
            _ => None,
        }
    }

    pub(crate) fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    /// Span for errors at the current position; at end of input, the last token.
    pub(crate) fn here(&self) -> SourceSpan {
        self.peek()
            .or_else(|| self.toks.last())
            .map_or(self.fallback, |t| t.span)
    }

    pub(crate) fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::new(t.span, format!("unexpected {}", t.tok.describe()))
                .expected(expected),
            None => ParseError::new(self.here(), "unexpected end of input").expected(expected),
        }
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek_tok() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, tok: &Tok) -> Result<&'a Token, ParseError> {
        match self.peek() {
            Some(t) if &t.tok == tok => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error(&tok.describe())),
        }
    }

    pub(crate) fn ident(&mut self, what: &str) -> Result<(&'a str, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) => {
                self.pos += 1;
                Ok((s, *span))
            }
            _ => Err(self.error(what)),
        }
    }

    pub(crate) fn keyword(&mut self, kw: &str) -> Result<SourceSpan, ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) if s == kw => {
                self.pos += 1;
                Ok(*span)
            }
            _ => Err(self.error(&format!("`{kw}`"))),
        }
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn number(&mut self, what: &str) -> Result<(f64, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Number(n),
                span,
            }) => {
                self.pos += 1;
                n.parse::<f64>()
                    .map(|v| (v, *span))
                    .map_err(|_| ParseError::new(*span, "malformed number"))
            }
            _ => Err(self.error(what)),
        }
    }

    pub(crate) fn unsigned(&mut self, what: &str) -> Result<(u64, SourceSpan), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Number(n),
                span,
            }) => {
                self.pos += 1;
                n.parse::<u64>().map(|v| (v, *span)).map_err(|_| {
                    ParseError::new(
                        *span,
                        format!("expected a non-negative integer, found `{n}`"),
                    )
                })
            }
            _ => Err(self.error(what)),
        }
    }

    pub(crate) fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(ParseError::new(
                t.span,
                format!("unexpected trailing {}", t.tok.describe()),
            )
            .expected("end of line")),
        }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_variable_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase())
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn fmt_num(n: f64) -> String {
    format!("{n}")
}
