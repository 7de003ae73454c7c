use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::compile::{Check, Clause, CompiledRule};
use super::{EvidenceItem, Hypothesis, ReasonError, SupportConfig, Violations};
use crate::dsl::Term;
use crate::fact::{Fact, FactStore, Family, SchemaRegistry, TimeRef};

type Bindings = HashMap<String, String>;

/// Binds `terms` against `fact`, extending `bindings`. Returns the variables
/// newly bound, or `None` on mismatch (in which case `bindings` is restored).
fn unify(terms: &[Term], fact: &Fact, bindings: &mut Bindings) -> Option<Vec<String>> {
    if fact.field_count() != terms.len() {
        return None;
    }
    let mut fresh: Vec<String> = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        let ok = match t {
            Term::Wildcard => true,
            Term::Const(c) => fact.field(i).is_some_and(|v| v.key() == c.key()),
            Term::Var(v) => {
                let key = fact.field(i).map(|f| f.key()).unwrap_or_default();
                match bindings.get(v) {
                    Some(existing) => *existing == key,
                    None => {
                        bindings.insert(v.clone(), key);
                        fresh.push(v.clone());
                        true
                    }
                }
            }
        };
        if !ok {
            for v in &fresh {
                bindings.remove(v);
            }
            return None;
        }
    }
    Some(fresh)
}

fn term_key(t: &Term, bindings: &Bindings) -> Option<String> {
    match t {
        Term::Const(c) => Some(c.key()),
        Term::Var(v) => bindings.get(v).cloned(),
        Term::Wildcard => None,
    }
}

fn check_holds(
    check: &Check,
    chosen: &[Option<usize>],
    store: &FactStore,
    bindings: &Bindings,
) -> bool {
    match check {
        Check::Temporal(c, a, b) => match (chosen[*a], chosen[*b]) {
            (Some(pa), Some(pb)) => c.holds_temporal(&store.get(pa).time, &store.get(pb).time),
            _ => true,
        },
        Check::Value(c) => {
            let (l, r) = match c {
                crate::dsl::Constraint::Eq(l, r) | crate::dsl::Constraint::Neq(l, r) => (l, r),
                _ => return true,
            };
            match (term_key(l, bindings), term_key(r, bindings)) {
                (Some(a), Some(b)) => c.holds_value(&a, &b),
                _ => true,
            }
        }
    }
}

/// Interval a candidate for clause `ci` must overlap to satisfy the hard
/// temporal checks against clauses bound earlier. `None` when no check bounds
/// it on both sides.
fn time_window(
    ci: usize,
    checks: &[Check],
    chosen: &[Option<usize>],
    store: &FactStore,
) -> Option<TimeRef> {
    use crate::dsl::Constraint as C;
    let (mut lo, mut hi, mut bounded) = (0u64, u64::MAX, false);
    for check in checks {
        let Check::Temporal(c, a, b) = check else {
            continue;
        };
        let (other, mine_first) = match (*a == ci, *b == ci) {
            (true, false) => (*b, true),
            (false, true) => (*a, false),
            _ => continue,
        };
        let Some(op) = chosen[other] else { continue };
        let t = store.get(op).time;
        // (lo, hi) the candidate must reach into, and whether that range is finite
        let (l, h, fin) = match (c, mine_first) {
            (C::Before(..), true) | (C::After(..), false) => {
                (Some(0), t.start().checked_sub(1), false)
            }
            (C::Before(..), false) | (C::After(..), true) => {
                (t.end().checked_add(1), Some(u64::MAX), false)
            }
            (C::During(..) | C::Overlaps(..), _) => (Some(t.start()), Some(t.end()), true),
            (C::Within(_, _, w), false) => (
                t.end().checked_add(1),
                Some(t.end().saturating_add(*w)),
                true,
            ),
            (C::Within(_, _, w), true) => (
                Some(t.start().saturating_sub(*w)),
                t.start().checked_sub(1),
                true,
            ),
            _ => continue,
        };
        // an unsatisfiable bound is left for the check itself to reject
        let (Some(l), Some(h)) = (l, h) else { continue };
        lo = lo.max(l);
        hi = hi.min(h);
        bounded |= fin;
    }
    (bounded && lo <= hi).then(|| TimeRef::interval(lo, hi).expect("ordered"))
}

/// Candidate positions for a clause, using the narrowest available index.
fn candidates<'s>(
    clause: &Clause,
    store: &'s FactStore,
    bindings: &Bindings,
    window: Option<TimeRef>,
) -> Cow<'s, [usize]> {
    let mut best: Option<&[usize]> = None;
    for (i, t) in clause.terms.iter().enumerate() {
        if let Some(key) = term_key(t, bindings) {
            let list = store.with_field(&clause.canonical, i, &key);
            if best.is_none_or(|b| list.len() < b.len()) {
                best = Some(list);
            }
        }
    }
    let best = best.unwrap_or_else(|| store.with_predicate(&clause.canonical));
    match window {
        Some(w) if best.len() > 8 => {
            let near = store.overlapping(&w);
            if near.len() < best.len() {
                Cow::Owned(
                    near.into_iter()
                        .filter(|&p| store.canonical_predicate(p) == clause.canonical)
                        .collect(),
                )
            } else {
                Cow::Borrowed(best)
            }
        }
        _ => Cow::Borrowed(best),
    }
}

struct Search<'a> {
    rule: &'a CompiledRule,
    store: &'a FactStore,
    chosen: Vec<Option<usize>>,
    bindings: Bindings,
    found: Vec<(Vec<usize>, Bindings)>,
}

impl Search<'_> {
    fn run(&mut self, step: usize) {
        if step == self.rule.plan.len() {
            if self.absents_hold() {
                let positions = self
                    .chosen
                    .iter()
                    .map(|p| p.expect("all clauses bound"))
                    .collect();
                self.found.push((positions, self.bindings.clone()));
            }
            return;
        }
        let ci = self.rule.plan[step];
        let clause = &self.rule.clauses[ci];
        let window = time_window(ci, &self.rule.hard_at[step], &self.chosen, self.store);
        for &pos in candidates(clause, self.store, &self.bindings, window).iter() {
            let fact = self.store.get(pos);
            if fact.conf.value() < clause.min_conf {
                continue;
            }
            let Some(fresh) = unify(&clause.terms, fact, &mut self.bindings) else {
                continue;
            };
            self.chosen[ci] = Some(pos);
            if self.rule.hard_at[step]
                .iter()
                .all(|c| check_holds(c, &self.chosen, self.store, &self.bindings))
            {
                self.run(step + 1);
            }
            self.chosen[ci] = None;
            for v in fresh {
                self.bindings.remove(&v);
            }
        }
    }

    fn absents_hold(&self) -> bool {
        self.rule.absents.iter().all(|a| {
            let window = a
                .scope
                .iter()
                .map(|&ci| self.store.get(self.chosen[ci].expect("bound")).time)
                .reduce(|x, y| x.hull(&y))
                .expect("scope names at least one alias")
                .padded(a.pad);
            !self.store.overlapping(&window).into_iter().any(|p| {
                if self.store.canonical_predicate(p) != a.canonical {
                    return false;
                }
                let mut local = self.bindings.clone();
                unify(&a.terms, self.store.get(p), &mut local).is_some()
            })
        })
    }
}

fn soft_violations(
    rule: &CompiledRule,
    chosen: &[Option<usize>],
    store: &FactStore,
    bindings: &Bindings,
) -> u32 {
    rule.soft
        .iter()
        .filter(|c| !check_holds(c, chosen, store, bindings))
        .count() as u32
}

fn build(
    rule: &CompiledRule,
    store: &FactStore,
    positions: &[usize],
    bindings: &Bindings,
    cfg: &SupportConfig,
) -> Result<Hypothesis, ReasonError> {
    let chosen: Vec<Option<usize>> = positions.iter().map(|&p| Some(p)).collect();
    let evidence: Vec<EvidenceItem> = rule
        .clauses
        .iter()
        .zip(positions)
        .map(|(c, &p)| {
            let f = store.get(p);
            EvidenceItem {
                alias: c.alias.clone(),
                fact: f.id.clone(),
                conf: f.conf.value(),
                weight: c.weight,
                modality: f.prov.modality,
                time: f.time,
            }
        })
        .collect();
    let hull = |ctx: bool| {
        positions
            .iter()
            .map(|&p| store.get(p))
            .filter(|f| ctx || f.family != Family::Context)
            .map(|f| f.time)
            .reduce(|a, b| a.hull(&b))
    };
    let time = hull(false)
        .or_else(|| hull(true))
        .unwrap_or(TimeRef::ALWAYS);
    let conclusion: BTreeMap<String, String> = rule
        .ast
        .conclusion
        .iter()
        .filter_map(|v| bindings.get(v).map(|k| (v.clone(), k.clone())))
        .collect();
    let mut h = Hypothesis {
        rule: rule.ast.name.clone(),
        construct: rule.ast.construct.clone(),
        bindings: conclusion,
        evidence,
        raw_support: 0.0,
        norm_support: 0.0,
        violations: Violations {
            v: soft_violations(rule, &chosen, store, bindings),
            p: 0,
        },
        time,
        anchor: store.get(positions[rule.anchor]).id.clone(),
        hard_violations: vec![],
        deferring_policies: vec![],
    };
    h.rescore(cfg)?;
    Ok(h)
}

/// Every satisfying assignment of facts to the rule's `MATCH` clauses, sorted
/// by bindings and then by the store positions of the evidence.
pub fn match_rule(
    rule: &CompiledRule,
    store: &FactStore,
    cfg: &SupportConfig,
) -> Result<Vec<Hypothesis>, ReasonError> {
    let mut search = Search {
        rule,
        store,
        chosen: vec![None; rule.clauses.len()],
        bindings: Bindings::new(),
        found: Vec::new(),
    };
    search.run(0);
    let mut found = search.found;
    let mut out = Vec::with_capacity(found.len());
    let mut keyed: Vec<(BTreeMap<String, String>, Vec<usize>, Bindings)> = found
        .drain(..)
        .map(|(pos, b)| {
            let key: BTreeMap<String, String> = rule
                .ast
                .conclusion
                .iter()
                .filter_map(|v| b.get(v).map(|k| (v.clone(), k.clone())))
                .collect();
            (key, pos, b)
        })
        .collect();
    keyed.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    for (_, pos, b) in &keyed {
        out.push(build(rule, store, pos, b, cfg)?);
    }
    Ok(out)
}

/// Recovers the full variable binding of a hypothesis from its cited facts.
fn rebind(
    h: &Hypothesis,
    rule: &CompiledRule,
    store: &FactStore,
) -> Option<(Vec<Option<usize>>, Bindings)> {
    if h.evidence.len() != rule.clauses.len() {
        return None;
    }
    let mut bindings = Bindings::new();
    let mut chosen = Vec::with_capacity(rule.clauses.len());
    for (c, e) in rule.clauses.iter().zip(&h.evidence) {
        let pos = store.position(&e.fact)?;
        unify(&c.terms, store.get(pos), &mut bindings)?;
        chosen.push(Some(pos));
    }
    Some((chosen, bindings))
}

/// Number of the rule's soft constraints the hypothesis's evidence fails.
pub fn count_constraint_violations(h: &Hypothesis, rule: &CompiledRule, store: &FactStore) -> u32 {
    match rebind(h, rule, store) {
        Some((chosen, bindings)) => soft_violations(rule, &chosen, store, &bindings),
        None => 0,
    }
}

/// True when the cited facts alone re-derive the hypothesis with the same
/// bindings and evidence.
pub fn check_evidence_sufficiency(
    h: &Hypothesis,
    rule: &CompiledRule,
    store: &FactStore,
    registry: &SchemaRegistry,
) -> bool {
    let mut ids: Vec<_> = h.evidence_ids();
    ids.sort();
    ids.dedup();
    let facts: Option<Vec<Fact>> = ids.iter().map(|id| store.by_id(id).cloned()).collect();
    let Some(facts) = facts else {
        return false;
    };
    let Ok(sub) = FactStore::from_facts(facts, registry) else {
        return false;
    };
    let target = h.evidence_ids();
    match_rule(rule, &sub, &SupportConfig::default())
        .map(|hs| {
            hs.iter()
                .any(|x| x.bindings == h.bindings && x.evidence_ids() == target)
        })
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::dsl::{parse_facts, parse_rules};
    use crate::reasoner::compile_rules;

    fn setup(facts: &str) -> (Vec<CompiledRule>, FactStore, SchemaRegistry) {
        let reg = SchemaRegistry::default_classroom();
        let (rules, errs) = parse_rules(bundled::RULES);
        assert!(errs.is_empty());
        let (fs, errs) = parse_facts(facts);
        assert!(errs.is_empty(), "{errs:?}");
        let store = FactStore::from_facts(fs, &reg).unwrap();
        (compile_rules(&rules, &reg).unwrap(), store, reg)
    }

    #[test]
    fn confusion_prompt_derives_one_hypothesis() {
        let (rules, store, reg) = setup(bundled::CONFUSION_FACTS);
        let hs = match_rule(&rules[0], &store, &SupportConfig::default()).unwrap();
        assert_eq!(hs.len(), 1);
        let h = &hs[0];
        assert_eq!(h.bindings["S"], "student_4");
        assert_eq!(h.evidence.len(), 4);
        assert!((h.norm_support - 0.52547616f64.powf(0.25)).abs() < 1e-9);
        assert_eq!(h.time, TimeRef::interval(120, 130).unwrap());
        assert!(check_evidence_sufficiency(h, &rules[0], &store, &reg));
        assert_eq!(count_constraint_violations(h, &rules[0], &store), 0);
    }

    #[test]
    fn late_help_request_breaks_the_window() {
        let text = bundled::CONFUSION_FACTS.replace("[128,130]", "[150,152]");
        let (rules, store, _) = setup(&text);
        assert!(match_rule(&rules[0], &store, &SupportConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn min_conf_filters_evidence() {
        let text = bundled::CONFUSION_FACTS.replace("0.88", "0.20");
        let (rules, store, _) = setup(&text);
        assert!(match_rule(&rules[0], &store, &SupportConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn absent_clause_blocks_speakers() {
        let base = "\
EVENT(teacher, open_floor, class, [10,15], 0.9)
REL(student_1, oriented_to, teacher, [8,20], 0.8)
REL(student_2, oriented_to, teacher, [8,20], 0.8)
EVENT(student_2, speak_turn, class, [12,13], 0.9)
";
        let (rules, store, _) = setup(base);
        let hs = match_rule(&rules[1], &store, &SupportConfig::default()).unwrap();
        let who: Vec<&str> = hs.iter().map(|h| h.bindings["S"].as_str()).collect();
        assert_eq!(who, ["student_1"]);
    }

    #[test]
    fn soft_constraints_count_as_violations() {
        let (rules, _) = parse_rules(
            "RULE r\n  CONCLUDE c(X)\n  MATCH a: OBS(X, gaze_target, ?)\n  MATCH b: EVENT(X, speak_turn, ?)\n  WHERE SOFT before(a, b)\nEND\n",
        );
        let reg = SchemaRegistry::default_classroom();
        let rule = compile_rules(&rules, &reg).unwrap().remove(0);
        let (fs, _) = parse_facts(
            "OBS(s, gaze_target, board, 20, 0.9)\nEVENT(s, speak_turn, class, [5,6], 0.9)\n",
        );
        let store = FactStore::from_facts(fs, &reg).unwrap();
        let hs = match_rule(&rule, &store, &SupportConfig::default()).unwrap();
        assert_eq!(hs.len(), 1);
        assert_eq!(hs[0].violations.v, 1);
        assert_eq!(count_constraint_violations(&hs[0], &rule, &store), 1);
        assert!((hs[0].raw_support - (2.0 * 0.9f64.ln() - 1.0)).abs() < 1e-12);
    }
}
