//! Read-only aggregation over a fact store.
//!
//! Every result row cites the facts it was computed from, so dropping any
//! uncited fact leaves the result unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Constraint, QueryAst, QueryOp, RankKey, Term, ANCHOR, THIS};
use crate::fact::{Fact, FactId, FactStore, SchemaRegistry, TimeRef};

/// Predicate and action that count as a turn.
pub const TURN_PREDICATE: &str = "EVENT";
pub const TURN_ACTION: &str = "speak_turn";
pub const MEMBERSHIP: &str = "member_of";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("`{target}` is neither a role of `{predicate}` nor a pattern variable")]
    UnknownTarget { target: String, predicate: String },
    #[error("query references `anchor` but no anchor fact was supplied")]
    MissingAnchor,
    #[error("an anchor fact was supplied but the query does not reference `anchor`")]
    UnusedAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRow {
    pub key: String,
    /// Count for aggregations, balance ratio for `RANK BY balance`, fact
    /// confidence for `SELECT`.
    pub value: f64,
    pub evidence: Vec<FactId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub kind: QueryOp,
    pub rows: Vec<QueryRow>,
    /// Distinct count for `COUNT_DISTINCT`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scalar: Option<u64>,
}

impl QueryResult {
    pub fn evidence(&self) -> BTreeSet<&FactId> {
        self.rows.iter().flat_map(|r| r.evidence.iter()).collect()
    }

    /// Plain-text table: one `key<TAB>value` line per row, then the scalar.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\n", r.key, r.value));
        }
        if let Some(s) = self.scalar {
            out.push_str(&format!("total\t{s}\n"));
        }
        out
    }
}

fn target_index(q: &QueryAst, registry: &SchemaRegistry) -> Result<usize, QueryError> {
    if let Some(i) = q
        .pattern
        .terms
        .iter()
        .position(|t| matches!(t, Term::Var(v) if *v == q.target))
    {
        return Ok(i);
    }
    registry
        .spec(&q.pattern.predicate)
        .and_then(|s| s.role_index(&q.target))
        .filter(|&i| i < q.pattern.terms.len())
        .ok_or_else(|| QueryError::UnknownTarget {
            target: q.target.clone(),
            predicate: q.pattern.predicate.clone(),
        })
}

fn bind(terms: &[Term], fact: &Fact) -> Option<HashMap<String, String>> {
    if fact.field_count() != terms.len() {
        return None;
    }
    let mut b: HashMap<String, String> = HashMap::new();
    for (i, t) in terms.iter().enumerate() {
        let key = fact.field(i)?.key();
        match t {
            Term::Wildcard => {}
            Term::Const(c) if c.key() != key => return None,
            Term::Const(_) => {}
            Term::Var(v) => {
                if b.get(v).is_some_and(|k| *k != key) {
                    return None;
                }
                b.insert(v.clone(), key);
            }
        }
    }
    Some(b)
}

fn constraint_holds(
    c: &Constraint,
    this: &TimeRef,
    anchor: Option<&TimeRef>,
    b: &HashMap<String, String>,
) -> bool {
    let resolve = |alias: &str| {
        if alias == THIS {
            Some(this)
        } else if alias == ANCHOR {
            anchor
        } else {
            None
        }
    };
    match c {
        Constraint::Eq(l, r) | Constraint::Neq(l, r) => {
            let key = |t: &Term| match t {
                Term::Var(v) => b.get(v).cloned(),
                Term::Const(v) => Some(v.key()),
                Term::Wildcard => None,
            };
            match (key(l), key(r)) {
                (Some(a), Some(z)) => c.holds_value(&a, &z),
                _ => true,
            }
        }
        _ => {
            let al = c.aliases();
            match (resolve(al[0]), resolve(al[1])) {
                (Some(a), Some(z)) => c.holds_temporal(a, z),
                _ => false,
            }
        }
    }
}

/// Store positions of facts matching the query pattern and constraints.
fn matching(
    q: &QueryAst,
    store: &FactStore,
    registry: &SchemaRegistry,
    anchor: Option<&Fact>,
) -> Vec<usize> {
    let canonical = registry.canonical(&q.pattern.predicate);
    let anchor_time = anchor.map(|a| a.time);
    store
        .with_predicate(canonical)
        .iter()
        .copied()
        .filter(|&p| {
            let f = store.get(p);
            match bind(&q.pattern.terms, f) {
                Some(b) => q
                    .constraints
                    .iter()
                    .all(|c| constraint_holds(c, &f.time, anchor_time.as_ref(), &b)),
                None => false,
            }
        })
        .collect()
}

fn field_key(f: &Fact, i: usize) -> String {
    f.field(i).map(|v| v.key()).unwrap_or_default()
}

pub fn execute_query(
    q: &QueryAst,
    store: &FactStore,
    registry: &SchemaRegistry,
    anchor: Option<&Fact>,
) -> Result<QueryResult, QueryError> {
    if !registry.is_registered(&q.pattern.predicate) {
        return Err(QueryError::UnknownPredicate(q.pattern.predicate.clone()));
    }
    match (q.references_anchor(), anchor.is_some()) {
        (true, false) => return Err(QueryError::MissingAnchor),
        (false, true) => return Err(QueryError::UnusedAnchor),
        _ => {}
    }
    let ti = target_index(q, registry)?;
    let hits = matching(q, store, registry, anchor);

    let grouped = || {
        let mut g: BTreeMap<String, Vec<FactId>> = BTreeMap::new();
        for &p in &hits {
            let f = store.get(p);
            g.entry(field_key(f, ti)).or_default().push(f.id.clone());
        }
        g
    };
    let count_rows = |g: BTreeMap<String, Vec<FactId>>| -> Vec<QueryRow> {
        g.into_iter()
            .map(|(key, evidence)| QueryRow {
                key,
                value: evidence.len() as f64,
                evidence,
            })
            .collect()
    };

    let (rows, scalar) = match (q.op, q.rank_key) {
        (QueryOp::Select, _) => (
            hits.iter()
                .map(|&p| {
                    let f = store.get(p);
                    QueryRow {
                        key: field_key(f, ti),
                        value: f.conf.value(),
                        evidence: vec![f.id.clone()],
                    }
                })
                .collect(),
            None,
        ),
        (QueryOp::CountDistinct, _) => {
            let rows = count_rows(grouped());
            let n = rows.len() as u64;
            (rows, Some(n))
        }
        (QueryOp::GroupCount, _) => (count_rows(grouped()), None),
        (QueryOp::Rank, Some(RankKey::Balance)) => (balance_rows(store, registry, &hits, ti), None),
        (QueryOp::Rank, _) => {
            let mut rows = count_rows(grouped());
            rows.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.key.cmp(&b.key)));
            (rows, None)
        }
    };
    Ok(QueryResult {
        kind: q.op,
        rows,
        scalar,
    })
}

/// Groups the matched turns by the target field and scores each group by
/// min/max member turn count. Members are the turn actors plus anyone linked to
/// the group by a membership relation; those relations are cited.
fn balance_rows(
    store: &FactStore,
    registry: &SchemaRegistry,
    hits: &[usize],
    ti: usize,
) -> Vec<QueryRow> {
    let mut groups: BTreeMap<String, (BTreeMap<String, u64>, Vec<usize>)> = BTreeMap::new();
    for &p in hits {
        let f = store.get(p);
        let (members, ev) = groups.entry(field_key(f, ti)).or_default();
        if let Some(actor) = f.args.first() {
            *members.entry(actor.clone()).or_default() += 1;
        }
        ev.push(p);
    }
    let rel = registry.canonical("REL");
    for (g, (members, ev)) in groups.iter_mut() {
        for &p in store.with_field(rel, 1, MEMBERSHIP) {
            let f = store.get(p);
            if f.args.get(2) == Some(g) {
                members.entry(f.args[0].clone()).or_default();
                ev.push(p);
            }
        }
        ev.sort_unstable();
    }
    let mut rows: Vec<QueryRow> = groups
        .into_iter()
        .map(|(key, (members, ev))| QueryRow {
            key,
            value: balance(members.values().copied()),
            evidence: ev.into_iter().map(|p| store.get(p).id.clone()).collect(),
        })
        .collect();
    rows.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.key.cmp(&b.key)));
    rows
}

fn balance(counts: impl Iterator<Item = u64>) -> f64 {
    let (mut lo, mut hi) = (u64::MAX, 0u64);
    for c in counts {
        lo = lo.min(c);
        hi = hi.max(c);
    }
    if hi == 0 {
        0.0
    } else {
        lo as f64 / hi as f64
    }
}

/// Min/max ratio of speaking turns among `group` over turns overlapping `window`.
pub fn turn_balance(store: &FactStore, group: &[String], window: &TimeRef) -> f64 {
    let mut counts: BTreeMap<&str, u64> = group.iter().map(|m| (m.as_str(), 0)).collect();
    for &p in store.with_field(TURN_PREDICATE, 1, TURN_ACTION) {
        let f = store.get(p);
        if !f.time.overlaps(window) {
            continue;
        }
        if let Some(c) = f.args.first().and_then(|a| counts.get_mut(a.as_str())) {
            *c += 1;
        }
    }
    balance(counts.into_values())
}
