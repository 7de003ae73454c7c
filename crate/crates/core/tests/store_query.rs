//! Store indexes and the query operators against linear scans.

use std::collections::{BTreeMap, BTreeSet};

use classlogic::dsl::{parse_facts, parse_query};
use classlogic::fact::{Fact, FactStore, SchemaRegistry, StorePattern, TimeRef};
use classlogic::query::{execute_query, QueryError};
use proptest::prelude::*;

const ACTORS: [&str; 4] = ["s1", "s2", "s3", "teacher"];
const ACTIONS: [&str; 3] = ["speak_turn", "help_request", "raise_hand"];
const TARGETS: [&str; 3] = ["group_1", "group_2", "class"];

fn fact_line() -> impl Strategy<Value = String> {
    (
        0usize..5,
        0usize..4,
        0usize..3,
        0usize..3,
        0u64..200,
        0u64..20,
        1u32..=100,
    )
        .prop_map(|(kind, a, b, t, s, l, c)| {
            let time = if l == 0 {
                s.to_string()
            } else {
                format!("[{s},{}]", s + l)
            };
            let conf = f64::from(c) / 100.0;
            match kind {
                0 => format!(
                    "EVENT({}, {}, {}, {time}, {conf:.2})",
                    ACTORS[a], ACTIONS[b], TARGETS[t]
                ),
                1 => format!(
                    "UTTER({}, {}, {}, {time}, {conf:.2})",
                    ACTORS[a], ACTIONS[b], TARGETS[t]
                ),
                2 => format!(
                    "REL({}, member_of, {}, {time}, {conf:.2})",
                    ACTORS[a], TARGETS[t]
                ),
                3 => format!("OBS({}, gaze_target, board, {time}, {conf:.2})", ACTORS[a]),
                _ => format!("CONTEXT(activity, lecture, {time})"),
            }
        })
}

fn facts(n: usize) -> impl Strategy<Value = Vec<Fact>> {
    prop::collection::vec(fact_line(), 0..n).prop_map(|lines| {
        let (fs, errs) = parse_facts(&lines.join("\n"));
        assert!(errs.is_empty(), "{errs:?}");
        fs
    })
}

fn canonical(p: &str) -> &str {
    if p == "UTTER" {
        "EVENT"
    } else {
        p
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn indexed_lookup_equals_scan(
        fs in facts(60),
        pred in prop::option::of(prop::sample::select(vec!["EVENT", "UTTER", "REL", "OBS", "CONTEXT"])),
        entity in prop::option::of(prop::sample::select(ACTORS.to_vec())),
        window in prop::option::of((0u64..220, 0u64..40)),
    ) {
        let reg = SchemaRegistry::default_classroom();
        let store = FactStore::from_facts(fs.clone(), &reg).unwrap();
        let window = window.map(|(s, l)| TimeRef::interval(s, s + l).unwrap());
        let pattern = StorePattern {
            predicate: pred.map(String::from),
            entity: entity.map(String::from),
            window,
        };
        let got: Vec<&Fact> = store.query(&pattern, &reg);
        let want: Vec<&Fact> = fs
            .iter()
            .filter(|f| pred.is_none_or(|p| canonical(&f.predicate) == canonical(p)))
            .filter(|f| entity.is_none_or(|e| f.args.iter().any(|a| a == e)))
            .filter(|f| window.is_none_or(|w| f.time.start() <= w.end() && w.start() <= f.time.end()))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn counts_match_scan(
        fs in facts(50),
        action in prop::sample::select(ACTIONS.to_vec()),
        role in prop::sample::select(vec![("actor", 0usize), ("target", 2), ("group", 2)]),
        anchor in prop::option::of((0u8..3, 0u64..200)),
    ) {
        let reg = SchemaRegistry::default_classroom();
        let store = FactStore::from_facts(fs.clone(), &reg).unwrap();
        let relation = ["after", "before", "overlaps"];
        let anchor_fact = anchor.map(|(_, t)| {
            parse_facts(&format!("EVENT(teacher, open_question, class, {t}, 1.0)")).0.remove(0)
        });
        let clause = anchor
            .map(|(k, _)| format!(" WHERE {}(this, anchor)", relation[k as usize]))
            .unwrap_or_default();
        let holds = |f: &Fact| match (anchor, &anchor_fact) {
            (Some((0, _)), Some(a)) => a.time.end() < f.time.start(),
            (Some((1, _)), Some(a)) => f.time.end() < a.time.start(),
            (Some(_), Some(a)) => f.time.start() <= a.time.end() && a.time.start() <= f.time.end(),
            _ => true,
        };
        let hits: Vec<&Fact> = fs
            .iter()
            .filter(|f| canonical(&f.predicate) == "EVENT" && f.args[1] == action && holds(f))
            .collect();
        let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for f in &hits {
            groups.entry(&f.args[role.1]).or_default().push(f.id.0.clone());
        }

        let q = parse_query(&format!("GROUP_COUNT {} FROM EVENT(?, {action}, ?){clause}", role.0)).unwrap();
        let r = execute_query(&q, &store, &reg, anchor_fact.as_ref()).unwrap();
        let got: Vec<(String, f64)> = r.rows.iter().map(|r| (r.key.clone(), r.value)).collect();
        let want: Vec<(String, f64)> = groups.iter().map(|(k, v)| (k.to_string(), v.len() as f64)).collect();
        prop_assert_eq!(got, want);

        let q = parse_query(&format!("COUNT_DISTINCT {} FROM EVENT(?, {action}, ?){clause}", role.0)).unwrap();
        let r = execute_query(&q, &store, &reg, anchor_fact.as_ref()).unwrap();
        prop_assert_eq!(r.scalar, Some(groups.len() as u64));

        let q = parse_query(&format!("RANK {} BY count FROM EVENT(?, {action}, ?){clause}", role.0)).unwrap();
        let r = execute_query(&q, &store, &reg, anchor_fact.as_ref()).unwrap();
        let mut want: Vec<(String, f64)> = groups.iter().map(|(k, v)| (k.to_string(), v.len() as f64)).collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got: Vec<(String, f64)> = r.rows.iter().map(|r| (r.key.clone(), r.value)).collect();
        prop_assert_eq!(got, want);

        let q = parse_query(&format!("SELECT {} FROM EVENT(?, {action}, ?){clause}", role.0)).unwrap();
        let r = execute_query(&q, &store, &reg, anchor_fact.as_ref()).unwrap();
        let ids: Vec<String> = r.rows.iter().map(|r| r.evidence[0].0.clone()).collect();
        let want: Vec<String> = hits.iter().map(|f| f.id.0.clone()).collect();
        prop_assert_eq!(ids, want);
    }

    #[test]
    fn evidence_is_sound(fs in facts(50), action in prop::sample::select(ACTIONS.to_vec())) {
        let reg = SchemaRegistry::default_classroom();
        let store = FactStore::from_facts(fs, &reg).unwrap();
        for text in [
            format!("GROUP_COUNT actor FROM EVENT(?, {action}, ?)"),
            format!("RANK group BY balance FROM EVENT(?, {action}, ?)"),
            format!("SELECT X FROM EVENT(X, {action}, ?)"),
        ] {
            let q = parse_query(&text).unwrap();
            let r = execute_query(&q, &store, &reg, None).unwrap();
            let mut seen = BTreeSet::new();
            for row in &r.rows {
                for id in &row.evidence {
                    let f = store.by_id(id);
                    prop_assert!(f.is_some());
                    let f = f.unwrap();
                    // each cited fact either matches the pattern or is a membership of the row's group
                    let turn = canonical(&f.predicate) == "EVENT" && f.args[1] == action;
                    let member = f.predicate == "REL" && f.args[1] == "member_of" && f.args[2] == row.key;
                    prop_assert!(turn || member, "{text}: {f:?}");
                    if turn && !text.starts_with("RANK") {
                        prop_assert!(seen.insert(id.clone()), "fact cited twice");
                    }
                }
            }
        }
    }

    #[test]
    fn balance_matches_scan(fs in facts(50)) {
        let reg = SchemaRegistry::default_classroom();
        let store = FactStore::from_facts(fs.clone(), &reg).unwrap();
        let q = parse_query("RANK group BY balance FROM EVENT(?, speak_turn, ?)").unwrap();
        let r = execute_query(&q, &store, &reg, None).unwrap();
        let mut groups: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
        for f in fs.iter().filter(|f| canonical(&f.predicate) == "EVENT" && f.args[1] == "speak_turn") {
            *groups.entry(&f.args[2]).or_default().entry(&f.args[0]).or_default() += 1;
        }
        for f in fs.iter().filter(|f| f.predicate == "REL" && f.args[1] == "member_of") {
            if let Some(g) = groups.get_mut(f.args[2].as_str()) {
                g.entry(&f.args[0]).or_default();
            }
        }
        let mut want: Vec<(String, f64)> = groups
            .iter()
            .map(|(g, m)| {
                let hi = *m.values().max().unwrap();
                let lo = *m.values().min().unwrap();
                (g.to_string(), lo as f64 / hi as f64)
            })
            .collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got: Vec<(String, f64)> = r.rows.iter().map(|r| (r.key.clone(), r.value)).collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn anchor_mismatch_is_an_error() {
    let reg = SchemaRegistry::default_classroom();
    let store = FactStore::new();
    let q = parse_query(
        "COUNT_DISTINCT actor FROM EVENT(?, help_request, ?) WHERE after(this, anchor)",
    )
    .unwrap();
    assert_eq!(
        execute_query(&q, &store, &reg, None),
        Err(QueryError::MissingAnchor)
    );
    let q = parse_query("SELECT actor FROM CUSTOM(?, ?)").unwrap();
    assert!(matches!(
        execute_query(&q, &store, &reg, None),
        Err(QueryError::UnknownPredicate(_))
    ));
}
