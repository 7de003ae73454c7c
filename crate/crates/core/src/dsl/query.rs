//! Aggregation queries over a closed operator whitelist:
//!
//! ```text
//! COUNT_DISTINCT actor FROM EVENT(?, help_request, ?) WHERE after(this, anchor)
//! RANK group BY balance FROM EVENT(?, speak_turn, ?)
//! ```
//!
//! `this` names the fact being matched and `anchor` the reference fact
//! supplied at execution time.

use std::fmt;

use serde::Serialize;

use super::ast::{parse_constraint, parse_pattern, Refs};
use super::{content_lines, lex_line, Constraint, Cursor, ParseError, Pattern, SourceSpan, Token};

pub const THIS: &str = "this";
pub const ANCHOR: &str = "anchor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QueryOp {
    Select,
    CountDistinct,
    GroupCount,
    Rank,
}

impl QueryOp {
    pub const WHITELIST: [(&'static str, QueryOp); 4] = [
        ("SELECT", QueryOp::Select),
        ("COUNT_DISTINCT", QueryOp::CountDistinct),
        ("GROUP_COUNT", QueryOp::GroupCount),
        ("RANK", QueryOp::Rank),
    ];

    pub fn keyword(self) -> &'static str {
        Self::WHITELIST
            .iter()
            .find(|(_, op)| *op == self)
            .map(|(k, _)| *k)
            .expect("every operator is listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKey {
    Count,
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub op: QueryOp,
    /// A role name of the pattern's predicate, or one of its variables.
    pub target: String,
    pub rank_key: Option<RankKey>,
    pub pattern: Pattern,
    pub constraints: Vec<Constraint>,
}

impl QueryAst {
    pub fn references_anchor(&self) -> bool {
        self.constraints
            .iter()
            .any(|c| c.aliases().contains(&ANCHOR))
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.op.keyword(), self.target)?;
        match self.rank_key {
            Some(RankKey::Count) => f.write_str(" BY count")?,
            Some(RankKey::Balance) => f.write_str(" BY balance")?,
            None => {}
        }
        write!(f, " FROM {}", self.pattern)?;
        for (i, c) in self.constraints.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn serialize_query(q: &QueryAst) -> String {
    q.to_string()
}

pub fn parse_query(text: &str) -> Result<QueryAst, ParseError> {
    let mut toks: Vec<Token> = Vec::new();
    for (line_no, line) in content_lines(text) {
        toks.extend(lex_line(line, line_no)?);
    }
    let empty = SourceSpan {
        line: 1,
        column: 1,
        length: 0,
    };
    let Some(first) = toks.first() else {
        return Err(ParseError::new(empty, "empty query").expected("a query operator"));
    };
    let mut cur = Cursor::new(&toks, first.span);
    let op = match cur.peek_ident() {
        Some(word) => match QueryOp::WHITELIST.iter().find(|(k, _)| *k == word) {
            Some((_, op)) => *op,
            None => {
                return Err(ParseError::new(
                    first.span,
                    format!("operator not permitted: `{word}`"),
                )
                .expected("SELECT, COUNT_DISTINCT, GROUP_COUNT or RANK"))
            }
        },
        None => {
            return Err(ParseError::new(first.span, "operator not permitted")
                .expected("SELECT, COUNT_DISTINCT, GROUP_COUNT or RANK"))
        }
    };
    cur.bump();
    let (target, target_span) = cur.ident("a role or variable")?;
    let rank_key = if cur.eat_keyword("BY") {
        let (key, span) = cur.ident("count or balance")?;
        if op != QueryOp::Rank {
            return Err(ParseError::new(span, "BY is only valid with RANK"));
        }
        Some(match key {
            "count" => RankKey::Count,
            "balance" => RankKey::Balance,
            _ => return Err(ParseError::new(span, "unknown rank key").expected("count or balance")),
        })
    } else {
        None
    };
    if op == QueryOp::Rank && rank_key.is_none() {
        return Err(cur.error("`BY`"));
    }
    cur.keyword("FROM")?;
    let mut refs = Refs::default();
    let (pattern, _) = parse_pattern(&mut cur, &mut refs)?;
    let pattern_vars: Vec<String> = refs.vars.iter().map(|(v, _)| v.clone()).collect();
    if super::is_variable_name(target) && !pattern_vars.iter().any(|v| v == target) {
        return Err(ParseError::new(
            target_span,
            format!("unbound variable `{target}`"),
        ));
    }
    let mut constraints = Vec::new();
    if cur.eat_keyword("WHERE") {
        loop {
            let mut crefs = Refs::default();
            constraints.push(parse_constraint(&mut cur, &mut crefs)?);
            if let Some((a, span)) = crefs.aliases.iter().find(|(a, _)| a != THIS && a != ANCHOR) {
                return Err(ParseError::new(*span, format!("unknown reference `{a}`"))
                    .expected("`this` or `anchor`"));
            }
            if let Some((v, span)) = crefs.vars.iter().find(|(v, _)| !pattern_vars.contains(v)) {
                return Err(ParseError::new(*span, format!("unbound variable `{v}`")));
            }
            if !cur.eat_keyword("AND") {
                break;
            }
        }
    }
    cur.finish()?;
    Ok(QueryAst {
        op,
        target: target.to_string(),
        rank_key,
        pattern,
        constraints,
    })
}
