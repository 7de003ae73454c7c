//! Fact files: one positional fact per statement, optionally followed by an
//! `@{id=…, src=…, mod=…, raw="…"}` annotation. A statement whose
//! parentheses are still open at the end of a line continues on the next.

use super::{
    content_lines, fmt_num, is_ident, lex_line, quote, Cursor, ParseError, SourceSpan, Tok, Token,
};
use crate::fact::{
    validate_fact, Confidence, Fact, FactId, Family, IdAllocator, Modality, Provenance,
    SchemaRegistry, TimeRef, Value,
};

/// Provenance source assumed when a fact line does not name one.
pub const DEFAULT_SOURCE: &str = "manual";

/// Parses with the default classroom registry.
pub fn parse_facts(text: &str) -> (Vec<Fact>, Vec<ParseError>) {
    parse_facts_with(text, &SchemaRegistry::default_classroom())
}

/// Parses a fact file. A malformed statement yields one error and parsing
/// resumes at the next statement.
pub fn parse_facts_with(text: &str, registry: &SchemaRegistry) -> (Vec<Fact>, Vec<ParseError>) {
    let mut facts = Vec::new();
    let mut errors = Vec::new();
    let mut ids = IdAllocator::new();
    let mut pending: Vec<Token> = Vec::new();
    let mut depth: i64 = 0;

    let flush = |toks: &[Token],
                 facts: &mut Vec<Fact>,
                 errors: &mut Vec<ParseError>,
                 ids: &mut IdAllocator| {
        match parse_statement(toks, registry) {
            Ok(stmt) => {
                let mut fact = stmt.fact;
                fact.id = match stmt.id {
                    Some(id) => {
                        ids.reserve(&id);
                        id
                    }
                    None => ids.assign(&fact),
                };
                facts.push(fact);
            }
            Err(e) => errors.push(e),
        }
    };

    for (line_no, line) in content_lines(text) {
        let toks = match lex_line(line, line_no) {
            Ok(t) => t,
            Err(e) => {
                errors.push(e);
                pending.clear();
                depth = 0;
                continue;
            }
        };
        let starts_statement = matches!(
            (toks.first().map(|t| &t.tok), toks.get(1).map(|t| &t.tok)),
            (Some(Tok::Ident(_)), Some(Tok::LParen))
        );
        if !pending.is_empty() && starts_statement {
            let open = pending
                .iter()
                .find(|t| t.tok == Tok::LParen)
                .map_or(pending[0].span, |t| t.span);
            errors.push(ParseError::new(open, "unclosed `(`").expected("`)`"));
            pending.clear();
            depth = 0;
        }
        for t in &toks {
            match t.tok {
                Tok::LParen => depth += 1,
                Tok::RParen => depth -= 1,
                _ => {}
            }
        }
        pending.extend(toks);
        if depth <= 0 {
            flush(&pending, &mut facts, &mut errors, &mut ids);
            pending.clear();
            depth = 0;
        }
    }
    if !pending.is_empty() {
        let open = pending
            .iter()
            .find(|t| t.tok == Tok::LParen)
            .map_or(pending[0].span, |t| t.span);
        errors.push(ParseError::new(open, "unclosed `(`").expected("`)`"));
    }
    (facts, errors)
}

enum Item {
    Sym(String, SourceSpan),
    Num(String, SourceSpan),
    Interval(u64, u64, SourceSpan),
}

impl Item {
    fn span(&self) -> SourceSpan {
        match self {
            Item::Sym(_, s) | Item::Num(_, s) | Item::Interval(_, _, s) => *s,
        }
    }
}

struct Statement {
    fact: Fact,
    id: Option<FactId>,
}

fn is_real(text: &str) -> bool {
    text.contains(['.', 'e', 'E'])
}

fn parse_statement(toks: &[Token], registry: &SchemaRegistry) -> Result<Statement, ParseError> {
    let fallback = toks[0].span;
    let mut cur = Cursor::new(toks, fallback);
    let (head, head_span) = cur.ident("a predicate")?;
    let spec = registry
        .spec(head)
        .ok_or_else(|| ParseError::new(head_span, format!("unregistered predicate `{head}`")))?;
    let family = spec.family;
    cur.expect(&Tok::LParen)?;
    let mut items = Vec::new();
    loop {
        let Some(t) = cur.peek() else {
            return Err(cur.error("a fact field"));
        };
        let item = match &t.tok {
            Tok::Ident(s) | Tok::Str(s) => {
                cur.bump();
                Item::Sym(s.clone(), t.span)
            }
            Tok::Number(n) => {
                cur.bump();
                Item::Num(n.clone(), t.span)
            }
            Tok::LBracket => {
                cur.bump();
                let (a, _) = cur.unsigned("interval start")?;
                cur.expect(&Tok::Comma)?;
                let (b, _) = cur.unsigned("interval end")?;
                let close = cur.expect(&Tok::RBracket)?;
                let span = SourceSpan {
                    line: t.span.line,
                    column: t.span.column,
                    length: if close.span.line == t.span.line {
                        close.span.column + 1 - t.span.column
                    } else {
                        1
                    },
                };
                if a > b {
                    return Err(ParseError::new(
                        span,
                        format!("interval start {a} after end {b}"),
                    ));
                }
                Item::Interval(a, b, span)
            }
            _ => return Err(cur.error("a symbol, number or interval")),
        };
        items.push(item);
        if cur.eat(&Tok::Comma) {
            continue;
        }
        cur.expect(&Tok::RParen)?;
        break;
    }

    // Trailing confidence and time, by shape.
    let mut conf = None;
    if let Some(Item::Num(n, span)) = items.last() {
        if is_real(n) {
            let v: f64 = n
                .parse()
                .map_err(|_| ParseError::new(*span, "malformed number"))?;
            let c = Confidence::new(v).map_err(|_| {
                ParseError::new(*span, "confidence out of range").expected("a value in [0, 1]")
            })?;
            conf = Some((c, *span));
            items.pop();
        }
    }
    let time = match items.last() {
        Some(Item::Interval(a, b, _)) => {
            let t = TimeRef::interval(*a, *b).expect("checked above");
            items.pop();
            Some(t)
        }
        Some(Item::Num(n, span)) if conf.is_some() || family != Family::Policy => {
            let t: u64 = n.parse().map_err(|_| {
                ParseError::new(*span, format!("invalid time `{n}`"))
                    .expected("a tick or [start,end]")
            })?;
            items.pop();
            Some(TimeRef::instant(t))
        }
        _ => None,
    };
    let time = match (time, family) {
        (Some(t), _) => t,
        (None, Family::Policy) if conf.is_none() => TimeRef::ALWAYS,
        (None, _) => {
            let at = conf.map_or(cur.here(), |(_, s)| s);
            return Err(ParseError::new(at, "missing time").expected("a tick or [start,end]"));
        }
    };
    let conf = match (conf, family) {
        (Some((c, _)), _) => c,
        (None, Family::Context | Family::Policy) => Confidence::CERTAIN,
        (None, _) => {
            return Err(
                ParseError::new(cur.here(), "missing confidence").expected("a value in [0, 1]")
            )
        }
    };

    let mut value = None;
    if family.has_value() {
        let Some(last) = items.pop() else {
            return Err(ParseError::new(
                head_span,
                format!("{head} requires a value"),
            ));
        };
        value = Some(match last {
            Item::Sym(s, _) => Value::Symbol(s),
            Item::Num(n, span) => Value::Number(
                n.parse()
                    .map_err(|_| ParseError::new(span, "malformed number"))?,
            ),
            Item::Interval(_, _, span) => {
                return Err(ParseError::new(span, "interval in value position"))
            }
        });
    }
    let mut args = Vec::with_capacity(items.len());
    for it in items {
        match it {
            Item::Sym(s, _) | Item::Num(s, _) => args.push(s),
            Item::Interval(..) => {
                return Err(ParseError::new(it.span(), "interval in argument position"))
            }
        }
    }

    let mut prov = Provenance::new(
        DEFAULT_SOURCE,
        registry
            .default_modality(head)
            .unwrap_or(spec.default_modality),
    );
    let mut id = None;
    if cur.eat(&Tok::At) {
        cur.expect(&Tok::LBrace)?;
        loop {
            let (key, key_span) = cur.ident("id, src, mod or raw")?;
            cur.expect(&Tok::Eq)?;
            let Some(t) = cur.bump() else {
                return Err(cur.error("an annotation value"));
            };
            let text = match &t.tok {
                Tok::Ident(s) | Tok::Str(s) | Tok::Number(s) => s.clone(),
                _ => {
                    return Err(
                        ParseError::new(t.span, format!("unexpected {}", t.tok.describe()))
                            .expected("an annotation value"),
                    )
                }
            };
            match key {
                "id" => id = Some(FactId(text)),
                "src" => prov.source = text,
                "mod" => {
                    prov.modality = text
                        .parse::<Modality>()
                        .map_err(|e| ParseError::new(t.span, e.to_string()))?
                }
                "raw" => prov.raw_ref = Some(text),
                other => {
                    return Err(
                        ParseError::new(key_span, format!("unknown annotation `{other}`"))
                            .expected("id, src, mod or raw"),
                    )
                }
            }
            if cur.eat(&Tok::Comma) {
                continue;
            }
            cur.expect(&Tok::RBrace)?;
            break;
        }
    }
    cur.finish()?;

    let fact = Fact {
        id: FactId(String::new()),
        predicate: head.to_string(),
        family,
        args,
        value,
        time,
        conf,
        prov,
    };
    if let Some(v) = validate_fact(&fact, registry).first() {
        return Err(ParseError::new(head_span, v.to_string()));
    }
    Ok(Statement { fact, id })
}

fn fmt_symbol(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn fmt_annotation_value(s: &str) -> String {
    fmt_symbol(s)
}

/// At least two decimals; more only when needed to reproduce the value.
pub(crate) fn fmt_conf(c: f64) -> String {
    let two = format!("{c:.2}");
    if two.parse::<f64>().ok() == Some(c) {
        two
    } else {
        let s = format!("{c}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    }
}

pub fn serialize_fact(fact: &Fact) -> String {
    serialize_fact_with(fact, &SchemaRegistry::default_classroom())
}

/// Canonical text for a fact; defaults (content id, `manual` source, the
/// predicate's default modality) are left out.
pub fn serialize_fact_with(fact: &Fact, registry: &SchemaRegistry) -> String {
    let mut parts: Vec<String> = fact.args.iter().map(|a| fmt_symbol(a)).collect();
    match &fact.value {
        Some(Value::Symbol(s)) => parts.push(fmt_symbol(s)),
        Some(Value::Number(n)) => parts.push(fmt_num(*n)),
        None => {}
    }
    let certain = fact.conf.value() == 1.0;
    // a policy tick without a confidence would read back as an argument
    let omit_conf = certain
        && match fact.family {
            Family::Context => true,
            Family::Policy => fact.time == TimeRef::ALWAYS || !fact.time.is_instant(),
            _ => false,
        };
    let omit_time = omit_conf && fact.family == Family::Policy && fact.time == TimeRef::ALWAYS;
    if !omit_time {
        parts.push(fact.time.to_string());
    }
    if !omit_conf {
        parts.push(fmt_conf(fact.conf.value()));
    }
    let mut out = format!("{}({})", fact.predicate, parts.join(", "));

    let mut ann = Vec::new();
    if fact.id != fact.content_id() {
        ann.push(format!("id={}", fmt_annotation_value(fact.id.as_str())));
    }
    if fact.prov.source != DEFAULT_SOURCE {
        ann.push(format!("src={}", fmt_annotation_value(&fact.prov.source)));
    }
    if registry.default_modality(&fact.predicate) != Some(fact.prov.modality) {
        ann.push(format!("mod={}", fact.prov.modality));
    }
    if let Some(r) = &fact.prov.raw_ref {
        ann.push(format!("raw={}", quote(r)));
    }
    if !ann.is_empty() {
        out.push_str(" @{");
        out.push_str(&ann.join(", "));
        out.push('}');
    }
    out
}

/// One fact per line, newline-terminated.
pub fn serialize_facts(facts: &[Fact], registry: &SchemaRegistry) -> String {
    let mut out = String::new();
    for f in facts {
        out.push_str(&serialize_fact_with(f, registry));
        out.push('\n');
    }
    out
}
