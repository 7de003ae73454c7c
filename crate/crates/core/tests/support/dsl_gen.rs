//! Generators for well-formed facts, rules, policies and queries.

use std::collections::BTreeMap;

use classlogic::dsl::{
    AbsentClause, Condition, Constraint, MatchClause, OnViolation, Pattern, PolicyAst, QueryAst,
    QueryOp, RankKey, RuleAst, Scope, Severity, Term, WhereClause, ANCHOR, THIS,
};
use classlogic::fact::{
    Confidence, Fact, FactId, Family, IdAllocator, Modality, Provenance, TimeRef, Value,
};
use proptest::prelude::*;

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,7}"
}

pub fn symbol() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => ident(),
        1 => "[A-Za-z0-9 #\"\\\\\t\n.,()@{}=?é-]{1,8}",
    ]
}

pub fn modality() -> impl Strategy<Value = Modality> {
    prop::sample::select(Modality::ALL.to_vec())
}

pub fn number() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(f64::from), -1.0e6..1.0e6f64]
}

pub fn time() -> impl Strategy<Value = TimeRef> {
    (0u64..5000, 0u64..100).prop_map(|(s, l)| TimeRef::interval(s, s + l).unwrap())
}

pub fn conf() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(1.0),
        Just(0.0),
        (0u32..=100).prop_map(|c| f64::from(c) / 100.0),
        0.0..=1.0f64
    ]
}

pub fn raw_fact() -> impl Strategy<Value = Fact> {
    let head = prop::sample::select(vec!["OBS", "EVENT", "UTTER", "REL", "CONTEXT", "POLICY"]);
    (
        head,
        prop::collection::vec(symbol(), 3),
        prop_oneof![
            symbol().prop_map(Value::Symbol),
            number().prop_map(Value::Number)
        ],
        time(),
        any::<bool>(),
        conf(),
        prop_oneof![3 => Just("manual".to_string()), 1 => symbol()],
        modality(),
        prop::option::of(symbol()),
    )
        .prop_map(
            |(head, args, value, time, always, conf, source, modality, raw)| {
                let family = match head {
                    "OBS" => Family::Obs,
                    "EVENT" | "UTTER" => Family::Event,
                    "REL" => Family::Rel,
                    "CONTEXT" => Family::Context,
                    _ => Family::Policy,
                };
                let arity = match family {
                    Family::Obs => 2,
                    Family::Context => 1,
                    _ => 3,
                };
                let (time, conf) = match family {
                    Family::Context => (time, 1.0),
                    Family::Policy if always => (TimeRef::ALWAYS, 1.0),
                    _ => (time, conf),
                };
                let mut prov = Provenance::new(source, modality);
                prov.raw_ref = raw;
                Fact {
                    id: FactId(String::new()),
                    predicate: head.to_string(),
                    family,
                    args: args[..arity].to_vec(),
                    value: family.has_value().then_some(value),
                    time,
                    conf: Confidence::new(conf).unwrap(),
                    prov,
                }
            },
        )
}

pub fn fact_batch() -> impl Strategy<Value = Vec<Fact>> {
    (
        prop::collection::vec(raw_fact(), 0..8),
        prop::collection::vec(any::<bool>(), 8),
    )
        .prop_map(|(mut facts, custom)| {
            let mut ids = IdAllocator::new();
            for (i, f) in facts.iter_mut().enumerate() {
                f.id = if custom[i] {
                    let id = FactId(format!("custom_{i}"));
                    ids.reserve(&id);
                    id
                } else {
                    ids.assign(f)
                };
            }
            facts
        })
}

pub fn constant() -> impl Strategy<Value = Term> {
    prop_oneof![
        3 => ident().prop_map(|s| Term::Const(Value::Symbol(s))),
        1 => symbol().prop_map(|s| Term::Const(Value::Symbol(s))),
        1 => number().prop_map(|n| Term::Const(Value::Number(n))),
    ]
}

pub const VARS: [&str; 4] = ["X", "Y", "Z", "Who"];

/// Pattern terms drawn from wildcards, constants and the given variables.
pub fn pattern(vars: &'static [&'static str]) -> impl Strategy<Value = Pattern> {
    let term =
        (0u8..3, constant(), any::<prop::sample::Index>()).prop_map(move |(k, c, i)| match k {
            0 => Term::Wildcard,
            2 if !vars.is_empty() => Term::Var(i.get(vars).to_string()),
            _ => c,
        });
    (
        prop::sample::select(vec!["EVENT", "OBS", "REL", "UTTER", "custom"]),
        prop::collection::vec(term, 1..4),
    )
        .prop_map(|(p, terms)| Pattern {
            predicate: p.to_string(),
            terms,
        })
}

pub fn temporal(a: String, b: String, kind: u8, w: u64) -> Constraint {
    match kind {
        0 => Constraint::Before(a, b),
        1 => Constraint::After(a, b),
        2 => Constraint::During(a, b),
        3 => Constraint::Overlaps(a, b),
        _ => Constraint::Within(a, b, w),
    }
}

pub fn term_vars(ts: &[Term]) -> Vec<String> {
    ts.iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.clone()),
            _ => None,
        })
        .collect()
}

pub fn rule_ast() -> impl Strategy<Value = RuleAst> {
    let mc = (
        pattern(&VARS),
        prop::option::of((0u32..=100).prop_map(|c| f64::from(c) / 100.0)),
    );
    (
        ident(),
        ident(),
        prop::collection::vec(mc, 1..5),
        prop::collection::vec(
            (
                pattern(&[]),
                any::<prop::sample::Index>(),
                0u64..5,
                any::<bool>(),
            ),
            0..3,
        ),
        prop::collection::vec(
            (
                0u8..7,
                any::<prop::sample::Index>(),
                any::<prop::sample::Index>(),
                0u64..60,
                any::<bool>(),
            ),
            0..4,
        ),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                prop::sample::select(vec![0.25, 0.5, 2.0, 3.0]),
            ),
            0..3,
        ),
        prop::option::of(any::<prop::sample::Index>()),
        any::<prop::sample::Index>(),
    )
        .prop_map(
            |(name, construct, mcs, absents, cons, weights, anchor, pick)| {
                let aliases: Vec<String> = (0..mcs.len()).map(|i| format!("m{i}")).collect();
                let mut matches: Vec<MatchClause> = mcs
                    .into_iter()
                    .zip(&aliases)
                    .map(|((pattern, min_conf), alias)| MatchClause {
                        alias: alias.clone(),
                        pattern,
                        min_conf,
                    })
                    .collect();
                let mut bound: Vec<String> = matches
                    .iter()
                    .flat_map(|m| term_vars(&m.pattern.terms))
                    .collect();
                bound.sort();
                bound.dedup();
                if bound.is_empty() {
                    matches[0].pattern.terms[0] = Term::Var("X".into());
                    bound.push("X".into());
                }
                let conclusion = vec![pick.get(&bound).clone()];
                let absents = absents
                    .into_iter()
                    .map(|(pattern, idx, pad, hull)| AbsentClause {
                        pattern,
                        scope: Scope {
                            aliases: if hull && aliases.len() > 1 {
                                vec![aliases[0].clone(), idx.get(&aliases[1..]).clone()]
                            } else {
                                vec![idx.get(&aliases).clone()]
                            },
                            pad,
                        },
                    })
                    .collect();
                let constraints = cons
                    .into_iter()
                    .map(|(kind, a, b, w, soft)| {
                        let constraint = match kind {
                            5 => Constraint::Eq(
                                Term::Var(a.get(&bound).clone()),
                                Term::Var(b.get(&bound).clone()),
                            ),
                            6 => Constraint::Neq(
                                Term::Var(a.get(&bound).clone()),
                                Term::Const(Value::Symbol("s1".into())),
                            ),
                            k => temporal(a.get(&aliases).clone(), b.get(&aliases).clone(), k, w),
                        };
                        WhereClause { constraint, soft }
                    })
                    .collect();
                let weights: BTreeMap<String, f64> = weights
                    .into_iter()
                    .map(|(i, w)| (i.get(&aliases).clone(), w))
                    .collect();
                RuleAst {
                    name,
                    construct,
                    conclusion,
                    anchor: anchor.map(|i| i.get(&aliases).clone()),
                    matches,
                    absents,
                    constraints,
                    weights,
                }
            },
        )
}

/// Rules with distinct names so the file as a whole is valid.
pub fn rule_file() -> impl Strategy<Value = Vec<RuleAst>> {
    prop::collection::vec(rule_ast(), 1..4).prop_map(|mut rs| {
        for (i, r) in rs.iter_mut().enumerate() {
            r.name = format!("{}_{i}", r.name);
        }
        rs
    })
}

pub fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![
        (0u64..5).prop_map(Condition::DistinctModalities),
        (modality(), (0u32..=100).prop_map(|c| f64::from(c) / 100.0)).prop_map(
            |(modality, threshold)| Condition::MinConf {
                modality,
                threshold
            }
        ),
        (symbol(), symbol()).prop_map(|(key, value)| Condition::ContextActive { key, value }),
        (0u64..10).prop_map(Condition::EvidenceCount),
    ]
}

pub fn policy_file() -> impl Strategy<Value = Vec<PolicyAst>> {
    let policy = (
        ident(),
        any::<bool>(),
        prop::option::of(ident()),
        prop::collection::vec(condition(), 1..4),
        any::<bool>(),
    )
        .prop_map(|(id, hard, applies_to, requirement, defer)| PolicyAst {
            id,
            severity: if hard { Severity::Hard } else { Severity::Soft },
            applies_to,
            requirement,
            on_violation: if hard || defer {
                OnViolation::Defer
            } else {
                OnViolation::Penalize
            },
        });
    prop::collection::vec(policy, 0..5).prop_map(|mut ps| {
        for (i, p) in ps.iter_mut().enumerate() {
            p.id = format!("{}_{i}", p.id);
        }
        ps
    })
}

pub fn query_ast() -> impl Strategy<Value = QueryAst> {
    let op = prop::sample::select(vec![
        (QueryOp::Select, None),
        (QueryOp::CountDistinct, None),
        (QueryOp::GroupCount, None),
        (QueryOp::Rank, Some(RankKey::Count)),
        (QueryOp::Rank, Some(RankKey::Balance)),
    ]);
    let refs = prop::sample::select(vec![THIS, ANCHOR]);
    let cons = (0u8..6, refs.clone(), refs, 0u64..100);
    (
        op,
        pattern(&VARS),
        prop::option::of(ident()),
        prop::collection::vec(cons, 0..3),
        any::<prop::sample::Index>(),
    )
        .prop_map(|((op, rank_key), pattern, role, cons, pick)| {
            let vars = term_vars(&pattern.terms);
            let target = match role {
                Some(r) => r,
                None if !vars.is_empty() => pick.get(&vars).clone(),
                None => "actor".into(),
            };
            let constraints = cons
                .into_iter()
                .map(|(kind, a, b, w)| match (kind, vars.first()) {
                    (5, Some(v)) => Constraint::Neq(
                        Term::Var(v.clone()),
                        Term::Const(Value::Symbol("s1".into())),
                    ),
                    (k, _) => temporal(a.to_string(), b.to_string(), k.min(4), w),
                })
                .collect();
            QueryAst {
                op,
                target,
                rank_key,
                pattern,
                constraints,
            }
        })
}
