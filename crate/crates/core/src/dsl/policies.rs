//! Policy language, one policy per line:
//!
//! ```text
//! POLICY <id> HARD|SOFT APPLIES <construct>|* REQUIRE <atom> [AND <atom>]* ON VIOLATION defer|penalize
//! ```

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{content_lines, fmt_num, is_ident, lex_line, quote, Cursor, ParseError, Tok};
use crate::fact::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OnViolation {
    Defer,
    Penalize,
}

/// Requirement atoms over a hypothesis's evidence.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    DistinctModalities(u64),
    MinConf { modality: Modality, threshold: f64 },
    ContextActive { key: String, value: String },
    EvidenceCount(u64),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sym = |s: &str| if is_ident(s) { s.to_string() } else { quote(s) };
        match self {
            Condition::DistinctModalities(k) => write!(f, "distinct_modalities(evidence) >= {k}"),
            Condition::MinConf {
                modality,
                threshold,
            } => write!(
                f,
                "min_conf(evidence, {modality}) >= {}",
                fmt_num(*threshold)
            ),
            Condition::ContextActive { key, value } => {
                write!(f, "context_active({}, {})", sym(key), sym(value))
            }
            Condition::EvidenceCount(k) => write!(f, "evidence_count >= {k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAst {
    pub id: String,
    pub severity: Severity,
    /// `None` applies to every construct.
    pub applies_to: Option<String>,
    /// Conjunction of atoms.
    pub requirement: Vec<Condition>,
    pub on_violation: OnViolation,
}

impl PolicyAst {
    pub fn applies(&self, construct: &str) -> bool {
        self.applies_to.as_deref().is_none_or(|c| c == construct)
    }
}

pub fn parse_policies(text: &str) -> (Vec<PolicyAst>, Vec<ParseError>) {
    let mut out: Vec<PolicyAst> = Vec::new();
    let mut errors = Vec::new();
    let mut ids = HashMap::new();
    for (line_no, line) in content_lines(text) {
        let toks = match lex_line(line, line_no) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mut cur = Cursor::new(&toks, toks[0].span);
        match parse_policy(&mut cur) {
            Ok((p, span)) => {
                if ids.insert(p.id.clone(), span).is_some() {
                    errors.push(ParseError::new(
                        span,
                        format!("duplicate policy id `{}`", p.id),
                    ));
                } else {
                    out.push(p);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    (out, errors)
}

fn symbol(cur: &mut Cursor<'_>, what: &str) -> Result<String, ParseError> {
    match cur.peek_tok() {
        Some(Tok::Ident(s) | Tok::Str(s)) => {
            let s = s.clone();
            cur.bump();
            Ok(s)
        }
        _ => Err(cur.error(what)),
    }
}

fn parse_atom(cur: &mut Cursor<'_>) -> Result<Condition, ParseError> {
    let (name, span) = cur.ident("a requirement")?;
    match name {
        "distinct_modalities" => {
            cur.expect(&Tok::LParen)?;
            cur.keyword("evidence")?;
            cur.expect(&Tok::RParen)?;
            cur.expect(&Tok::Ge)?;
            Ok(Condition::DistinctModalities(cur.unsigned("a count")?.0))
        }
        "min_conf" => {
            cur.expect(&Tok::LParen)?;
            cur.keyword("evidence")?;
            cur.expect(&Tok::Comma)?;
            let (m, mspan) = cur.ident("a modality")?;
            let modality = m.parse::<Modality>().map_err(|e| {
                ParseError::new(mspan, e.to_string())
                    .expected("video, audio, language, metadata or derived")
            })?;
            cur.expect(&Tok::RParen)?;
            cur.expect(&Tok::Ge)?;
            let (threshold, tspan) = cur.number("a confidence")?;
            if !(0.0..=1.0).contains(&threshold) {
                return Err(ParseError::new(tspan, "confidence threshold out of range")
                    .expected("a value in [0, 1]"));
            }
            Ok(Condition::MinConf {
                modality,
                threshold,
            })
        }
        "context_active" => {
            cur.expect(&Tok::LParen)?;
            let key = symbol(cur, "a context key")?;
            cur.expect(&Tok::Comma)?;
            let value = symbol(cur, "a context value")?;
            cur.expect(&Tok::RParen)?;
            Ok(Condition::ContextActive { key, value })
        }
        "evidence_count" => {
            cur.expect(&Tok::Ge)?;
            Ok(Condition::EvidenceCount(cur.unsigned("a count")?.0))
        }
        other => Err(
            ParseError::new(span, format!("unknown requirement `{other}`"))
                .expected("distinct_modalities, min_conf, context_active or evidence_count"),
        ),
    }
}

fn parse_policy(cur: &mut Cursor<'_>) -> Result<(PolicyAst, super::SourceSpan), ParseError> {
    cur.keyword("POLICY")?;
    let (id, id_span) = cur.ident("a policy id")?;
    let severity = match cur.ident("HARD or SOFT")? {
        ("HARD", _) => Severity::Hard,
        ("SOFT", _) => Severity::Soft,
        (_, span) => return Err(ParseError::new(span, "unknown severity").expected("HARD or SOFT")),
    };
    cur.keyword("APPLIES")?;
    let applies_to = if cur.eat(&Tok::Star) {
        None
    } else {
        Some(cur.ident("a construct or `*`")?.0.to_string())
    };
    cur.keyword("REQUIRE")?;
    let mut requirement = vec![parse_atom(cur)?];
    while cur.eat_keyword("AND") {
        requirement.push(parse_atom(cur)?);
    }
    cur.keyword("ON")?;
    cur.keyword("VIOLATION")?;
    let on_violation = match cur.ident("defer or penalize")? {
        ("defer", _) => OnViolation::Defer,
        ("penalize", span) => {
            if severity == Severity::Hard {
                return Err(
                    ParseError::new(span, "hard policies must defer on violation")
                        .expected("defer"),
                );
            }
            OnViolation::Penalize
        }
        (_, span) => {
            return Err(ParseError::new(span, "unknown consequence").expected("defer or penalize"))
        }
    };
    cur.finish()?;
    Ok((
        PolicyAst {
            id: id.to_string(),
            severity,
            applies_to,
            requirement,
            on_violation,
        },
        id_span,
    ))
}

pub fn serialize_policy(p: &PolicyAst) -> String {
    let sev = match p.severity {
        Severity::Hard => "HARD",
        Severity::Soft => "SOFT",
    };
    let req: Vec<String> = p.requirement.iter().map(|c| c.to_string()).collect();
    let cons = match p.on_violation {
        OnViolation::Defer => "defer",
        OnViolation::Penalize => "penalize",
    };
    format!(
        "POLICY {} {sev} APPLIES {} REQUIRE {} ON VIOLATION {cons}",
        p.id,
        p.applies_to.as_deref().unwrap_or("*"),
        req.join(" AND ")
    )
}

pub fn serialize_policies(ps: &[PolicyAst]) -> String {
    ps.iter().map(|p| serialize_policy(p) + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_modal_policy() {
        let line = "POLICY no_single_modality_alert HARD APPLIES * REQUIRE distinct_modalities(evidence) >= 2 ON VIOLATION defer";
        let (ps, errs) = parse_policies(line);
        assert!(errs.is_empty(), "{errs:?}");
        assert_eq!(ps[0].severity, Severity::Hard);
        assert_eq!(ps[0].applies_to, None);
        assert_eq!(ps[0].requirement, [Condition::DistinctModalities(2)]);
        assert_eq!(serialize_policy(&ps[0]), line);
    }

    #[test]
    fn soft_policy_may_defer() {
        let (ps, errs) = parse_policies(
            "POLICY p SOFT APPLIES confusion_candidate REQUIRE evidence_count >= 3 ON VIOLATION defer",
        );
        assert!(errs.is_empty());
        assert_eq!(ps[0].on_violation, OnViolation::Defer);
    }

    #[test]
    fn hard_policy_cannot_penalize() {
        let (ps, errs) = parse_policies(
            "POLICY p HARD APPLIES * REQUIRE evidence_count >= 3 ON VIOLATION penalize",
        );
        assert!(ps.is_empty());
        assert_eq!(errs[0].message, "hard policies must defer on violation");
        assert_eq!(errs[0].span.column, 66);
    }

    #[test]
    fn unknown_modality_is_a_load_error() {
        let (_, errs) = parse_policies(
            "POLICY p SOFT APPLIES * REQUIRE min_conf(evidence, smell) >= 0.5 ON VIOLATION penalize",
        );
        assert!(errs[0].message.contains("smell"));
    }

    #[test]
    fn conjunctions_roundtrip() {
        let line = "POLICY p SOFT APPLIES x REQUIRE min_conf(evidence, language) >= 0.9 AND context_active(activity, guided_proof) ON VIOLATION penalize";
        let (ps, errs) = parse_policies(line);
        assert!(errs.is_empty(), "{errs:?}");
        assert_eq!(ps[0].requirement.len(), 2);
        assert_eq!(serialize_policy(&ps[0]), line);
    }
}
