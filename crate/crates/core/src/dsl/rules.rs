//! Rule language.
//!
//! ```text
//! RULE confusion_candidate
//!   CONCLUDE confusion_candidate(S) AT r
//!   MATCH q: EVENT(teacher, open_question, ?)
//!   MATCH r: EVENT(S, help_request, ?) MIN_CONF 0.5
//!   ABSENT EVENT(S, speak_turn, ?) IN hull(q, r) PAD 2
//!   WHERE within(q, r, 20)
//!   WHERE SOFT overlaps(q, r)
//!   WEIGHT r 2
//! END
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::ast::{parse_constraint, parse_pattern, Refs};
use super::{
    content_lines, fmt_num, lex_line, Cursor, ParseError, Pattern, SourceSpan, Tok, WhereClause,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchClause {
    pub alias: String,
    pub pattern: Pattern,
    pub min_conf: Option<f64>,
}

/// The interval an `ABSENT` clause ranges over: the hull of the named
/// aliases, widened by `pad` ticks on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Scope {
    pub aliases: Vec<String>,
    pub pad: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsentClause {
    pub pattern: Pattern,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleAst {
    pub name: String,
    pub construct: String,
    pub conclusion: Vec<String>,
    /// Alias whose fact identifies one claim when several traces support it.
    pub anchor: Option<String>,
    pub matches: Vec<MatchClause>,
    pub absents: Vec<AbsentClause>,
    pub constraints: Vec<WhereClause>,
    pub weights: BTreeMap<String, f64>,
}

impl RuleAst {
    pub fn weight(&self, alias: &str) -> f64 {
        self.weights.get(alias).copied().unwrap_or(1.0)
    }

    pub fn clause(&self, alias: &str) -> Option<&MatchClause> {
        self.matches.iter().find(|m| m.alias == alias)
    }
}

#[derive(Default)]
struct Draft {
    name: String,
    name_span: Option<SourceSpan>,
    conclusion: Option<(String, Vec<String>, Option<String>)>,
    matches: Vec<MatchClause>,
    absents: Vec<AbsentClause>,
    constraints: Vec<WhereClause>,
    weights: BTreeMap<String, f64>,
    refs: Refs,
    match_vars: BTreeSet<String>,
    alias_spans: HashMap<String, SourceSpan>,
    // variables that must be bound: conclusion and WHERE terms
    required_vars: Vec<(String, SourceSpan)>,
    broken: bool,
}

pub fn parse_rules(text: &str) -> (Vec<RuleAst>, Vec<ParseError>) {
    let mut rules: Vec<RuleAst> = Vec::new();
    let mut errors = Vec::new();
    let mut names: HashMap<String, SourceSpan> = HashMap::new();
    let mut draft: Option<Draft> = None;
    let mut last_span = SourceSpan {
        line: 1,
        column: 1,
        length: 0,
    };

    for (line_no, line) in content_lines(text) {
        let toks = match lex_line(line, line_no) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                if let Some(d) = draft.as_mut() {
                    d.broken = true;
                }
                continue;
            }
        };
        let Some(first) = toks.first() else { continue };
        last_span = first.span;
        let mut cur = Cursor::new(&toks, first.span);
        let kw = cur.peek_ident().unwrap_or("");

        match (kw, draft.as_mut()) {
            ("RULE", Some(d)) => {
                errors.push(
                    ParseError::new(first.span, format!("rule `{}` is missing END", d.name))
                        .expected("`END`"),
                );
                draft = None;
            }
            ("END", None) => {
                errors.push(ParseError::new(first.span, "END without RULE"));
                continue;
            }
            (_, None) if kw != "RULE" => {
                errors.push(cur.error("`RULE`"));
                continue;
            }
            _ => {}
        }

        if kw == "RULE" {
            cur.bump();
            let mut d = Draft::default();
            match cur
                .ident("a rule name")
                .and_then(|(n, s)| cur.finish().map(|_| (n, s)))
            {
                Ok((name, span)) => {
                    d.name = name.to_string();
                    d.name_span = Some(span);
                }
                Err(e) => {
                    errors.push(e);
                    d.broken = true;
                }
            }
            draft = Some(d);
            continue;
        }

        let d = draft.as_mut().expect("inside a rule");
        if kw == "END" {
            let d = draft.take().expect("inside a rule");
            if let Err(e) = cur.bump().map_or(Ok(()), |_| cur.finish()) {
                errors.push(e);
                continue;
            }
            if d.broken {
                continue;
            }
            match finish_rule(d, first.span) {
                Ok((rule, span)) => {
                    if names.contains_key(&rule.name) {
                        errors.push(ParseError::new(
                            span,
                            format!("duplicate rule name `{}`", rule.name),
                        ));
                    } else {
                        names.insert(rule.name.clone(), span);
                        rules.push(rule);
                    }
                }
                Err(e) => errors.push(e),
            }
            continue;
        }
        if d.broken {
            continue;
        }
        if let Err(e) = parse_clause(&mut cur, d) {
            errors.push(e);
            d.broken = true;
        }
    }
    if let Some(d) = draft {
        errors.push(
            ParseError::new(
                d.name_span.unwrap_or(last_span),
                format!("rule `{}` is missing END", d.name),
            )
            .expected("`END`"),
        );
    }
    (rules, errors)
}

fn parse_clause(cur: &mut Cursor<'_>, d: &mut Draft) -> Result<(), ParseError> {
    let (kw, kw_span) = cur.ident("a rule clause")?;
    match kw {
        "CONCLUDE" => {
            if d.conclusion.is_some() {
                return Err(ParseError::new(kw_span, "second CONCLUDE in one rule"));
            }
            let (construct, _) = cur.ident("a construct name")?;
            cur.expect(&Tok::LParen)?;
            let mut vars = Vec::new();
            loop {
                let (v, span) = cur.ident("a variable")?;
                if !super::is_variable_name(v) {
                    return Err(ParseError::new(span, format!("`{v}` is not a variable"))
                        .expected("an upper-case variable"));
                }
                d.required_vars.push((v.to_string(), span));
                vars.push(v.to_string());
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            cur.expect(&Tok::RParen)?;
            let mut anchor = None;
            if cur.eat_keyword("AT") {
                let (a, span) = cur.ident("a clause alias")?;
                d.refs.aliases.push((a.to_string(), span));
                anchor = Some(a.to_string());
            }
            d.conclusion = Some((construct.to_string(), vars, anchor));
        }
        "MATCH" => {
            let (alias, span) = cur.ident("a clause alias")?;
            if d.alias_spans.contains_key(alias) {
                return Err(ParseError::new(span, format!("duplicate alias `{alias}`")));
            }
            cur.expect(&Tok::Colon)?;
            let mut refs = Refs::default();
            let (pattern, _) = parse_pattern(cur, &mut refs)?;
            let mut min_conf = None;
            if cur.eat_keyword("MIN_CONF") {
                let (v, vspan) = cur.number("a confidence floor")?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(ParseError::new(vspan, "confidence floor out of range")
                        .expected("a value in [0, 1]"));
                }
                min_conf = Some(v);
            }
            d.alias_spans.insert(alias.to_string(), span);
            d.match_vars.extend(refs.vars.into_iter().map(|(v, _)| v));
            d.matches.push(MatchClause {
                alias: alias.to_string(),
                pattern,
                min_conf,
            });
        }
        "ABSENT" => {
            let mut refs = Refs::default();
            let (pattern, _) = parse_pattern(cur, &mut refs)?;
            cur.keyword("IN")?;
            let mut aliases = Vec::new();
            if cur.eat_keyword("hull") {
                cur.expect(&Tok::LParen)?;
                loop {
                    let (a, s) = cur.ident("a clause alias")?;
                    d.refs.aliases.push((a.to_string(), s));
                    aliases.push(a.to_string());
                    if !cur.eat(&Tok::Comma) {
                        break;
                    }
                }
                cur.expect(&Tok::RParen)?;
            } else {
                let (a, s) = cur.ident("a clause alias or hull(...)")?;
                d.refs.aliases.push((a.to_string(), s));
                aliases.push(a.to_string());
            }
            let mut pad = 0;
            if cur.eat_keyword("PAD") {
                pad = cur.unsigned("a padding in ticks")?.0;
            }
            d.absents.push(AbsentClause {
                pattern,
                scope: Scope { aliases, pad },
            });
        }
        "WHERE" => {
            let soft = cur.eat_keyword("SOFT");
            let mut refs = Refs::default();
            let constraint = parse_constraint(cur, &mut refs)?;
            d.refs.aliases.extend(refs.aliases);
            d.required_vars.extend(refs.vars);
            d.constraints.push(WhereClause { constraint, soft });
        }
        "WEIGHT" => {
            let (alias, span) = cur.ident("a clause alias")?;
            let (w, wspan) = cur.number("a weight")?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ParseError::new(
                    wspan,
                    "weights must be finite and non-negative",
                ));
            }
            d.refs.aliases.push((alias.to_string(), span));
            if d.weights.insert(alias.to_string(), w).is_some() {
                return Err(ParseError::new(
                    span,
                    format!("second WEIGHT for `{alias}`"),
                ));
            }
        }
        other => {
            return Err(
                ParseError::new(kw_span, format!("unknown clause `{other}`"))
                    .expected("CONCLUDE, MATCH, ABSENT, WHERE, WEIGHT or END"),
            )
        }
    }
    cur.finish()
}

fn finish_rule(d: Draft, end_span: SourceSpan) -> Result<(RuleAst, SourceSpan), ParseError> {
    let name_span = d.name_span.unwrap_or(end_span);
    let Some((construct, conclusion, anchor)) = d.conclusion else {
        return Err(ParseError::new(
            name_span,
            format!("rule `{}` has no CONCLUDE", d.name),
        ));
    };
    if d.matches.is_empty() {
        return Err(ParseError::new(
            name_span,
            format!("rule `{}` has no MATCH clause", d.name),
        ));
    }
    for (a, span) in &d.refs.aliases {
        if !d.alias_spans.contains_key(a) {
            return Err(ParseError::new(*span, format!("unknown alias `{a}`")));
        }
    }
    for (v, span) in &d.required_vars {
        if !d.match_vars.contains(v) {
            return Err(ParseError::new(*span, format!("unbound variable `{v}`")));
        }
    }
    Ok((
        RuleAst {
            name: d.name,
            construct,
            conclusion,
            anchor,
            matches: d.matches,
            absents: d.absents,
            constraints: d.constraints,
            weights: d.weights,
        },
        name_span,
    ))
}

pub fn serialize_rule(rule: &RuleAst) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "RULE {}", rule.name);
    let _ = write!(
        out,
        "  CONCLUDE {}({})",
        rule.construct,
        rule.conclusion.join(", ")
    );
    if let Some(a) = &rule.anchor {
        let _ = write!(out, " AT {a}");
    }
    out.push('\n');
    for m in &rule.matches {
        let _ = write!(out, "  MATCH {}: {}", m.alias, m.pattern);
        if let Some(c) = m.min_conf {
            let _ = write!(out, " MIN_CONF {}", fmt_num(c));
        }
        out.push('\n');
    }
    for a in &rule.absents {
        let _ = write!(out, "  ABSENT {} IN ", a.pattern);
        if a.scope.aliases.len() == 1 {
            out.push_str(&a.scope.aliases[0]);
        } else {
            let _ = write!(out, "hull({})", a.scope.aliases.join(", "));
        }
        if a.scope.pad > 0 {
            let _ = write!(out, " PAD {}", a.scope.pad);
        }
        out.push('\n');
    }
    for w in &rule.constraints {
        let soft = if w.soft { "SOFT " } else { "" };
        let _ = writeln!(out, "  WHERE {soft}{}", w.constraint);
    }
    for (alias, w) in &rule.weights {
        let _ = writeln!(out, "  WEIGHT {alias} {}", fmt_num(*w));
    }
    out.push_str("END\n");
    out
}

pub fn serialize_rules(rules: &[RuleAst]) -> String {
    rules
        .iter()
        .map(serialize_rule)
        .collect::<Vec<_>>()
        .join("\n")
}
