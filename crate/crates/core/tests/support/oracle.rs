//! Random rules and fact sets with a brute-force matcher to check against.

use std::collections::BTreeMap;

use classlogic::dsl::{parse_facts, parse_rules};
use classlogic::fact::{Fact, FactStore, SchemaRegistry};
use classlogic::reasoner::{compile_rule, match_rule, SupportConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const ENTITIES: [&str; 3] = ["s1", "s2", "s3"];
pub const ACTIONS: [&str; 2] = ["speak_turn", "help_request"];
pub const RELS: [&str; 2] = ["oriented_to", "mutual_orientation"];
pub const GAZE: [&str; 2] = ["board", "worksheet"];
pub const VARS: [&str; 3] = ["X", "Y", "Z"];

#[derive(Debug, Clone)]
pub struct GenFact {
    pub head: &'static str,
    pub fields: [String; 3],
    pub start: u64,
    pub len: u64,
    pub conf: u32,
}

pub fn vocab(head: &str, pos: usize) -> &'static [&'static str] {
    match (head, pos) {
        (_, 0) => &ENTITIES,
        ("EVENT" | "UTTER", 1) => &ACTIONS,
        ("EVENT" | "UTTER", _) => &ENTITIES,
        ("REL", 1) => &RELS,
        ("REL", _) => &ENTITIES,
        ("OBS", 1) => &["gaze_target"],
        _ => &GAZE,
    }
}

pub fn gen_fact(heads: usize) -> impl Strategy<Value = GenFact> {
    (
        0usize..heads,
        0usize..3,
        0usize..3,
        0usize..3,
        0u64..30,
        0u64..5,
        1u32..=100,
    )
        .prop_map(|(h, a, b, c, start, len, conf)| {
            let head = ["EVENT", "UTTER", "REL", "OBS"][h];
            let pick = |pos: usize, i: usize| {
                let v = vocab(head, pos);
                v[i % v.len()].to_string()
            };
            GenFact {
                head,
                fields: [pick(0, a), pick(1, b), pick(2, c)],
                start,
                len,
                conf,
            }
        })
}

pub fn fact_text(f: &GenFact) -> String {
    let time = if f.len == 0 {
        f.start.to_string()
    } else {
        format!("[{},{}]", f.start, f.start + f.len)
    };
    format!(
        "{}({}, {}, {}, {time}, {:.2})\n",
        f.head,
        f.fields[0],
        f.fields[1],
        f.fields[2],
        f64::from(f.conf) / 100.0
    )
}

/// A pattern position: 0 wildcard, 1..=3 variable, otherwise a vocabulary constant.
#[derive(Debug, Clone)]
pub struct GenClause {
    pub head: &'static str,
    pub terms: [u8; 3],
    pub min_conf: Option<u32>,
    pub weight: u8,
}

#[derive(Debug, Clone)]
pub struct GenConstraint {
    pub kind: u8,
    pub a: usize,
    pub b: usize,
    pub w: u64,
    pub soft: bool,
}

#[derive(Debug, Clone)]
pub struct GenAbsent {
    pub head: &'static str,
    pub terms: [u8; 3],
    pub scope: usize,
    pub pad: u64,
}

#[derive(Debug, Clone)]
pub struct GenRule {
    pub clauses: Vec<GenClause>,
    pub constraints: Vec<GenConstraint>,
    pub absent: Option<GenAbsent>,
}

pub fn gen_terms() -> impl Strategy<Value = [u8; 3]> {
    [0u8..6, 0u8..6, 0u8..6]
}

pub fn gen_rule(heads: usize) -> impl Strategy<Value = GenRule> {
    let clause = (
        0usize..heads,
        gen_terms(),
        prop::option::weighted(0.3, 1u32..=90),
        0u8..3,
    )
        .prop_map(|(h, terms, min_conf, weight)| GenClause {
            head: ["EVENT", "UTTER", "REL", "OBS"][h],
            terms,
            min_conf,
            weight,
        });
    let constraint = (0u8..7, 0usize..4, 0usize..4, 0u64..12, any::<bool>()).prop_map(
        |(kind, a, b, w, soft)| GenConstraint {
            kind,
            a,
            b,
            w,
            soft,
        },
    );
    let absent =
        (0usize..heads, gen_terms(), 0usize..4, 0u64..3).prop_map(|(h, terms, scope, pad)| {
            GenAbsent {
                head: ["EVENT", "UTTER", "REL", "OBS"][h],
                terms,
                scope,
                pad,
            }
        });
    (
        prop::collection::vec(clause, 1..=4),
        prop::collection::vec(constraint, 0..4),
        prop::option::weighted(0.3, absent),
    )
        .prop_map(|(clauses, mut constraints, absent)| {
            let n = clauses.len();
            for c in &mut constraints {
                c.a %= n;
                c.b %= n;
            }
            let absent = absent.map(|mut a| {
                a.scope %= n;
                a
            });
            GenRule {
                clauses,
                constraints,
                absent,
            }
        })
}

pub fn term_text(head: &str, pos: usize, t: u8) -> String {
    match t {
        0 => "?".into(),
        1..=3 => VARS[t as usize - 1].into(),
        k => {
            let v = vocab(head, pos);
            v[(k as usize - 4) % v.len()].into()
        }
    }
}

pub fn vars_of(rule: &GenRule) -> Vec<&'static str> {
    let mut vs: Vec<&str> = rule
        .clauses
        .iter()
        .flat_map(|c| {
            c.terms
                .iter()
                .filter(|t| (1..=3).contains(*t))
                .map(|t| VARS[*t as usize - 1])
        })
        .collect();
    vs.sort();
    vs.dedup();
    vs
}

/// Forces at least one variable so the conclusion has something to bind.
pub fn normalize(mut rule: GenRule) -> GenRule {
    if vars_of(&rule).is_empty() {
        rule.clauses[0].terms[0] = 1;
    }
    rule
}

pub const WEIGHTS: [f64; 3] = [1.0, 0.5, 2.0];

pub fn rule_text(rule: &GenRule) -> String {
    let vars = vars_of(rule);
    let mut s = format!("RULE r\n  CONCLUDE c({})\n", vars.join(", "));
    for (i, c) in rule.clauses.iter().enumerate() {
        let terms: Vec<String> = (0..3).map(|p| term_text(c.head, p, c.terms[p])).collect();
        s.push_str(&format!("  MATCH a{i}: {}({})", c.head, terms.join(", ")));
        if let Some(m) = c.min_conf {
            s.push_str(&format!(" MIN_CONF {:.2}", f64::from(m) / 100.0));
        }
        s.push('\n');
    }
    if let Some(a) = &rule.absent {
        let terms: Vec<String> = (0..3).map(|p| term_text(a.head, p, a.terms[p])).collect();
        s.push_str(&format!(
            "  ABSENT {}({}) IN a{} PAD {}\n",
            a.head,
            terms.join(", "),
            a.scope,
            a.pad
        ));
    }
    for c in &rule.constraints {
        let soft = if c.soft { "SOFT " } else { "" };
        let body = match c.kind {
            0 => format!("before(a{}, a{})", c.a, c.b),
            1 => format!("after(a{}, a{})", c.a, c.b),
            2 => format!("during(a{}, a{})", c.a, c.b),
            3 => format!("overlaps(a{}, a{})", c.a, c.b),
            4 => format!("within(a{}, a{}, {})", c.a, c.b, c.w),
            5 => format!("eq({}, {})", vars[c.a % vars.len()], vars[c.b % vars.len()]),
            _ => format!(
                "neq({}, {})",
                vars[c.a % vars.len()],
                vars[c.b % vars.len()]
            ),
        };
        s.push_str(&format!("  WHERE {soft}{body}\n"));
    }
    for (i, c) in rule.clauses.iter().enumerate() {
        if c.weight != 0 {
            s.push_str(&format!("  WEIGHT a{i} {}\n", WEIGHTS[c.weight as usize]));
        }
    }
    s.push_str("END\n");
    s
}

// ---- oracle ----

pub fn canon(head: &str) -> &str {
    if head == "UTTER" {
        "EVENT"
    } else {
        head
    }
}

pub fn span(f: &Fact) -> (u64, u64) {
    (f.time.start(), f.time.end())
}

pub fn temporal(kind: u8, a: (u64, u64), b: (u64, u64), w: u64) -> bool {
    match kind {
        0 => a.1 < b.0,
        1 => b.1 < a.0,
        2 => b.0 <= a.0 && a.1 <= b.1,
        3 => a.0 <= b.1 && b.0 <= a.1,
        4 => a.1 < b.0 && b.0 - a.1 <= w,
        _ => true,
    }
}

pub fn fields(f: &Fact) -> Vec<String> {
    let mut v = f.args.clone();
    if let Some(val) = &f.value {
        v.push(val.key());
    }
    v
}

pub fn unify_into(
    head: &str,
    terms: &[u8; 3],
    f: &Fact,
    b: &mut BTreeMap<&'static str, String>,
) -> bool {
    if canon(head) != canon(&f.predicate) {
        return false;
    }
    let fs = fields(f);
    if fs.len() != 3 {
        return false;
    }
    for p in 0..3 {
        match terms[p] {
            0 => {}
            1..=3 => {
                let v = VARS[terms[p] as usize - 1];
                if let Some(prev) = b.get(v) {
                    if *prev != fs[p] {
                        return false;
                    }
                } else {
                    b.insert(v, fs[p].clone());
                }
            }
            _ => {
                if term_text(head, p, terms[p]) != fs[p] {
                    return false;
                }
            }
        }
    }
    true
}

pub struct Expected {
    pub bindings: BTreeMap<String, String>,
    pub evidence: Vec<String>,
    pub raw: f64,
    pub norm: f64,
}

pub fn oracle(rule: &GenRule, facts: &[Fact]) -> Vec<Expected> {
    let n = rule.clauses.len();
    let vars = vars_of(rule);
    let mut out: Vec<(BTreeMap<String, String>, Vec<usize>, f64, f64)> = Vec::new();
    let total = facts.len().pow(n as u32);
    for code in 0..total {
        let mut idx = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            idx.push(c % facts.len());
            c /= facts.len();
        }
        let mut b = BTreeMap::new();
        let ok = rule.clauses.iter().zip(&idx).all(|(cl, &i)| {
            let f = &facts[i];
            cl.min_conf
                .is_none_or(|m| f.conf.value() >= f64::from(m) / 100.0)
                && unify_into(cl.head, &cl.terms, f, &mut b)
        });
        if !ok {
            continue;
        }
        let check = |c: &GenConstraint| match c.kind {
            5 => b[vars[c.a % vars.len()]] == b[vars[c.b % vars.len()]],
            6 => b[vars[c.a % vars.len()]] != b[vars[c.b % vars.len()]],
            k => temporal(k, span(&facts[idx[c.a]]), span(&facts[idx[c.b]]), c.w),
        };
        if !rule.constraints.iter().filter(|c| !c.soft).all(check) {
            continue;
        }
        if let Some(a) = &rule.absent {
            let (s, e) = span(&facts[idx[a.scope]]);
            let (s, e) = (s.saturating_sub(a.pad), e.saturating_add(a.pad));
            let blocked = facts.iter().any(|f| {
                let (fs, fe) = span(f);
                let mut local = b.clone();
                fs <= e && s <= fe && unify_into(a.head, &a.terms, f, &mut local)
            });
            if blocked {
                continue;
            }
        }
        let v = rule
            .constraints
            .iter()
            .filter(|c| c.soft && !check(c))
            .count() as f64;
        let mut seen = Vec::new();
        let (mut mass, mut wsum) = (0.0, 0.0);
        for (cl, &i) in rule.clauses.iter().zip(&idx) {
            if seen.contains(&i) {
                continue;
            }
            seen.push(i);
            let w = WEIGHTS[cl.weight as usize];
            mass += w * facts[i].conf.value().max(1e-6).ln();
            wsum += w;
        }
        let raw = mass - v;
        let key: BTreeMap<String, String> =
            b.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        out.push((key, idx, raw, (raw / wsum).exp()));
    }
    out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    out.into_iter()
        .map(|(bindings, idx, raw, norm)| Expected {
            bindings,
            evidence: idx.iter().map(|&i| facts[i].id.0.clone()).collect(),
            raw,
            norm,
        })
        .collect()
}

pub fn check(gf: Vec<GenFact>, rule: GenRule) -> Result<usize, TestCaseError> {
    let rule = normalize(rule);
    let reg = SchemaRegistry::default_classroom();
    let text: String = gf.iter().map(fact_text).collect();
    let (facts, errs) = parse_facts(&text);
    prop_assert!(errs.is_empty(), "{errs:?}");
    let src = rule_text(&rule);
    let (asts, errs) = parse_rules(&src);
    prop_assert!(errs.is_empty(), "{src}\n{errs:?}");
    let compiled = compile_rule(&asts[0], &reg).unwrap();
    let store = FactStore::from_facts(facts.clone(), &reg).unwrap();
    let got = match_rule(&compiled, &store, &SupportConfig::default()).unwrap();
    let want = oracle(&rule, &facts);
    prop_assert_eq!(got.len(), want.len(), "{}", src);
    for (g, w) in got.iter().zip(&want) {
        prop_assert_eq!(&g.bindings, &w.bindings);
        let ids: Vec<String> = g.evidence.iter().map(|e| e.fact.0.clone()).collect();
        prop_assert_eq!(&ids, &w.evidence);
        prop_assert!((g.raw_support - w.raw).abs() < 1e-9);
        prop_assert!((g.norm_support - w.norm).abs() < 1e-9);
    }
    Ok(want.len())
}
