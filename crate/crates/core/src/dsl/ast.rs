use std::fmt;

use super::{fmt_num, is_ident, is_variable_name, quote, Cursor, ParseError, SourceSpan, Tok};
use crate::fact::{Fact, TimeRef, Value};

/// A pattern position: a variable, the wildcard `?`, or a constant.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Wildcard,
    Const(Value),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Wildcard => f.write_str("?"),
            Term::Const(Value::Number(n)) => f.write_str(&fmt_num(*n)),
            Term::Const(Value::Symbol(s)) => {
                if is_ident(s) && !is_variable_name(s) {
                    f.write_str(s)
                } else {
                    f.write_str(&quote(s))
                }
            }
        }
    }
}

/// `HEAD(term, ...)`: positions cover the arguments and then the value slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub predicate: String,
    pub terms: Vec<Term>,
}

impl Pattern {
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Matches constants against the fact's fields by key text; variables and
    /// wildcards match anything here. Arity must agree.
    pub fn matches_constants(&self, fact: &Fact) -> bool {
        fact.field_count() == self.terms.len()
            && self.terms.iter().enumerate().all(|(i, t)| match t {
                Term::Const(c) => fact.field(i).is_some_and(|v| v.key() == c.key()),
                _ => true,
            })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

/// Temporal relations between clause aliases and value tests between terms.
///
/// Intervals are inclusive tick ranges. `before(a, b)` holds when `a` ends
/// strictly before `b` starts; `within(a, b, w)` additionally bounds that gap
/// by `w` ticks.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Before(String, String),
    After(String, String),
    During(String, String),
    Overlaps(String, String),
    Within(String, String, u64),
    Eq(Term, Term),
    Neq(Term, Term),
}

impl Constraint {
    pub fn aliases(&self) -> Vec<&str> {
        match self {
            Constraint::Before(a, b)
            | Constraint::After(a, b)
            | Constraint::During(a, b)
            | Constraint::Overlaps(a, b)
            | Constraint::Within(a, b, _) => vec![a, b],
            Constraint::Eq(..) | Constraint::Neq(..) => vec![],
        }
    }

    pub fn variables(&self) -> Vec<&str> {
        match self {
            Constraint::Eq(a, b) | Constraint::Neq(a, b) => [a, b]
                .into_iter()
                .filter_map(|t| match t {
                    Term::Var(v) => Some(v.as_str()),
                    _ => None,
                })
                .collect(),
            _ => vec![],
        }
    }

    pub fn is_temporal(&self) -> bool {
        !matches!(self, Constraint::Eq(..) | Constraint::Neq(..))
    }

    /// Evaluates a temporal constraint on the intervals bound to its aliases.
    pub fn holds_temporal(&self, a: &TimeRef, b: &TimeRef) -> bool {
        match self {
            Constraint::Before(..) => a.end() < b.start(),
            Constraint::After(..) => b.end() < a.start(),
            Constraint::During(..) => b.contains(a),
            Constraint::Overlaps(..) => a.overlaps(b),
            Constraint::Within(_, _, w) => a.end() < b.start() && b.start() - a.end() <= *w,
            Constraint::Eq(..) | Constraint::Neq(..) => true,
        }
    }

    /// Evaluates a value constraint with both sides resolved to key text.
    pub fn holds_value(&self, a: &str, b: &str) -> bool {
        match self {
            Constraint::Eq(..) => a == b,
            Constraint::Neq(..) => a != b,
            _ => true,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Before(a, b) => write!(f, "before({a}, {b})"),
            Constraint::After(a, b) => write!(f, "after({a}, {b})"),
            Constraint::During(a, b) => write!(f, "during({a}, {b})"),
            Constraint::Overlaps(a, b) => write!(f, "overlaps({a}, {b})"),
            Constraint::Within(a, b, w) => write!(f, "within({a}, {b}, {w})"),
            Constraint::Eq(a, b) => write!(f, "eq({a}, {b})"),
            Constraint::Neq(a, b) => write!(f, "neq({a}, {b})"),
        }
    }
}

/// A `WHERE` line. Hard constraints gate matching; soft ones are counted as
/// violations instead.
#[derive(Debug, Clone, PartialEq)]
pub struct WhereClause {
    pub constraint: Constraint,
    pub soft: bool,
}

/// Names referenced while parsing, with their spans, for binding checks.
#[derive(Debug, Default)]
pub(crate) struct Refs {
    pub aliases: Vec<(String, SourceSpan)>,
    pub vars: Vec<(String, SourceSpan)>,
}

pub(crate) fn parse_term(cur: &mut Cursor<'_>, refs: &mut Refs) -> Result<Term, ParseError> {
    let Some(t) = cur.peek() else {
        return Err(cur.error("a term"));
    };
    let term = match &t.tok {
        Tok::Question => Term::Wildcard,
        Tok::Ident(s) if is_variable_name(s) => {
            refs.vars.push((s.clone(), t.span));
            Term::Var(s.clone())
        }
        Tok::Ident(s) | Tok::Str(s) => Term::Const(Value::Symbol(s.clone())),
        Tok::Number(n) => Term::Const(Value::Number(
            n.parse()
                .map_err(|_| ParseError::new(t.span, "malformed number"))?,
        )),
        _ => return Err(cur.error("a variable, `?` or a constant")),
    };
    cur.bump();
    Ok(term)
}

pub(crate) fn parse_pattern(
    cur: &mut Cursor<'_>,
    refs: &mut Refs,
) -> Result<(Pattern, SourceSpan), ParseError> {
    let (head, span) = cur.ident("a predicate")?;
    cur.expect(&Tok::LParen)?;
    let mut terms = vec![parse_term(cur, refs)?];
    while cur.eat(&Tok::Comma) {
        terms.push(parse_term(cur, refs)?);
    }
    cur.expect(&Tok::RParen)?;
    Ok((
        Pattern {
            predicate: head.to_string(),
            terms,
        },
        span,
    ))
}

fn alias(cur: &mut Cursor<'_>, refs: &mut Refs) -> Result<String, ParseError> {
    let (a, span) = cur.ident("a clause alias")?;
    refs.aliases.push((a.to_string(), span));
    Ok(a.to_string())
}

pub(crate) fn parse_constraint(
    cur: &mut Cursor<'_>,
    refs: &mut Refs,
) -> Result<Constraint, ParseError> {
    let (name, span) = cur.ident("a constraint")?;
    cur.expect(&Tok::LParen)?;
    let c = match name {
        "before" | "after" | "during" | "overlaps" | "within" => {
            let a = alias(cur, refs)?;
            cur.expect(&Tok::Comma)?;
            let b = alias(cur, refs)?;
            match name {
                "before" => Constraint::Before(a, b),
                "after" => Constraint::After(a, b),
                "during" => Constraint::During(a, b),
                "overlaps" => Constraint::Overlaps(a, b),
                _ => {
                    cur.expect(&Tok::Comma)?;
                    let (w, _) = cur.unsigned("a window in ticks")?;
                    Constraint::Within(a, b, w)
                }
            }
        }
        "eq" | "neq" => {
            let a = parse_term(cur, refs)?;
            cur.expect(&Tok::Comma)?;
            let b = parse_term(cur, refs)?;
            if name == "eq" {
                Constraint::Eq(a, b)
            } else {
                Constraint::Neq(a, b)
            }
        }
        other => {
            return Err(
                ParseError::new(span, format!("unknown constraint `{other}`"))
                    .expected("before, after, during, overlaps, within, eq or neq"),
            )
        }
    };
    cur.expect(&Tok::RParen)?;
    Ok(c)
}
