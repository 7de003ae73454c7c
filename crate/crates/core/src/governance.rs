//! Policies, abstention and retention-layer exports.
//!
//! A ranked list is answered only when the top normalized support reaches
//! `tau_s`, its margin over the runner-up reaches `tau_delta`, and no hard
//! policy vetoes it. Everything else is deferred with machine-readable reasons.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::dsl::{parse_policies, Condition, OnViolation, ParseError, PolicyAst, Severity};
use crate::fact::{Fact, FactId, FactStore, Family, SchemaRegistry, TimeRef};
use crate::reasoner::{margin, Hypothesis, ReasonError, SupportConfig};

pub const BELOW_SUPPORT: &str = "below_support";
pub const BELOW_MARGIN: &str = "below_margin";
pub const NO_HYPOTHESIS: &str = "no_hypothesis";

#[derive(Debug, Error)]
pub enum GovernanceError {
    #[error("policy parse errors: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Parse(Vec<ParseError>),
    #[error("policy `{policy}` refers to unknown context key `{key}`")]
    UnknownContextKey { policy: String, key: String },
    #[error("{0} must lie in {1}")]
    Threshold(&'static str, &'static str),
    #[error(transparent)]
    Support(#[from] ReasonError),
}

/// Parses policy text and checks it against the registry.
pub fn load_policies(
    text: &str,
    registry: &SchemaRegistry,
) -> Result<Vec<PolicyAst>, GovernanceError> {
    let (policies, errors) = parse_policies(text);
    if !errors.is_empty() {
        return Err(GovernanceError::Parse(errors));
    }
    for p in &policies {
        for c in &p.requirement {
            if let Condition::ContextActive { key, .. } = c {
                if !registry.is_context_key(key) {
                    return Err(GovernanceError::UnknownContextKey {
                        policy: p.id.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
    }
    Ok(policies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    /// Symbolic facts with links to raw media.
    L0,
    /// Symbolic facts, traces and decisions; raw links removed.
    L1,
    /// Aggregate statistics only.
    L2,
}

impl std::str::FromStr for Retention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(Retention::L0),
            "l1" => Ok(Retention::L1),
            "l2" => Ok(Retention::L2),
            other => Err(format!("unknown retention level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernanceConfig {
    pub tau_s: f64,
    pub tau_delta: f64,
    pub policies: Vec<PolicyAst>,
    pub retention: Retention,
    pub support: SupportConfig,
}

impl GovernanceConfig {
    pub fn new(
        tau_s: f64,
        tau_delta: f64,
        policies: Vec<PolicyAst>,
        retention: Retention,
    ) -> Result<Self, GovernanceError> {
        if !(0.0..=1.0).contains(&tau_s) {
            return Err(GovernanceError::Threshold("tau_s", "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&tau_delta) {
            return Err(GovernanceError::Threshold("tau_delta", "[0, 1]"));
        }
        Ok(GovernanceConfig {
            tau_s,
            tau_delta,
            policies,
            retention,
            support: SupportConfig::default(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyOutcome {
    /// Violations that count toward the support penalty.
    pub p: u32,
    pub hard: Vec<String>,
    /// Soft policies whose consequence is to defer.
    pub deferring: Vec<String>,
}

fn condition_holds(c: &Condition, h: &Hypothesis, store: &FactStore) -> bool {
    match c {
        Condition::DistinctModalities(k) => h.modalities().len() as u64 >= *k,
        Condition::MinConf {
            modality,
            threshold,
        } => h
            .distinct_evidence()
            .iter()
            .filter(|e| e.modality == *modality)
            .all(|e| e.conf >= *threshold),
        Condition::ContextActive { key, value } => store
            .with_field("CONTEXT", 0, key)
            .iter()
            .map(|&p| store.get(p))
            .any(|f| {
                f.value.as_ref().is_some_and(|v| v.key() == *value) && f.time.overlaps(&h.time)
            }),
        Condition::EvidenceCount(k) => h.distinct_evidence().len() as u64 >= *k,
    }
}

pub fn evaluate_policies(
    h: &Hypothesis,
    store: &FactStore,
    policies: &[PolicyAst],
) -> PolicyOutcome {
    let mut out = PolicyOutcome::default();
    for p in policies.iter().filter(|p| p.applies(&h.construct)) {
        if p.requirement.iter().all(|c| condition_holds(c, h, store)) {
            continue;
        }
        match (p.severity, p.on_violation) {
            (Severity::Hard, _) => out.hard.push(p.id.clone()),
            (Severity::Soft, OnViolation::Penalize) => out.p += 1,
            (Severity::Soft, OnViolation::Defer) => {
                out.p += 1;
                out.deferring.push(p.id.clone());
            }
        }
    }
    out
}

/// Applies policies to each hypothesis and folds the penalty into its support.
pub fn govern(
    hs: &mut [Hypothesis],
    store: &FactStore,
    cfg: &GovernanceConfig,
) -> Result<(), GovernanceError> {
    for h in hs.iter_mut() {
        let o = evaluate_policies(h, store, &cfg.policies);
        h.violations.p = o.p;
        h.hard_violations = o.hard;
        h.deferring_policies = o.deferring;
        h.rescore(&cfg.support)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Answer,
    Defer,
}

/// What a decision was about, kept on DEFER too so abstentions can be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub construct: String,
    pub bindings: BTreeMap<String, String>,
    pub time: TimeRef,
    pub evidence: Vec<FactId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Hypothesis>,
    pub reasons: Vec<String>,
    /// Governed normalized support of the top hypothesis.
    pub support: Option<f64>,
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Candidate>,
    /// True when a policy forced deferral regardless of thresholds.
    #[serde(default)]
    pub vetoed: bool,
}

impl Decision {
    pub fn is_answer(&self) -> bool {
        self.outcome == Outcome::Answer
    }
}

/// Answers with the top hypothesis or defers with every applicable reason.
pub fn decide(ranked: &[Hypothesis], cfg: &GovernanceConfig) -> Decision {
    let Some(top) = ranked.first() else {
        return Decision {
            outcome: Outcome::Defer,
            hypothesis: None,
            reasons: vec![NO_HYPOTHESIS.to_string()],
            support: None,
            margin: None,
            candidate: None,
            vetoed: false,
        };
    };
    let delta = margin(ranked);
    let mut reasons = Vec::new();
    if top.norm_support < cfg.tau_s {
        reasons.push(BELOW_SUPPORT.to_string());
    }
    if delta < cfg.tau_delta {
        reasons.push(BELOW_MARGIN.to_string());
    }
    reasons.extend(
        top.hard_violations
            .iter()
            .map(|id| format!("hard_policy:{id}")),
    );
    reasons.extend(
        top.deferring_policies
            .iter()
            .map(|id| format!("soft_policy:{id}")),
    );
    let vetoed = !top.hard_violations.is_empty() || !top.deferring_policies.is_empty();
    let outcome = if reasons.is_empty() {
        Outcome::Answer
    } else {
        Outcome::Defer
    };
    Decision {
        outcome,
        hypothesis: (outcome == Outcome::Answer).then(|| top.clone()),
        reasons,
        support: Some(top.norm_support),
        margin: Some(delta),
        candidate: Some(Candidate {
            construct: top.construct.clone(),
            bindings: top.bindings.clone(),
            time: top.time,
            evidence: top.evidence.iter().map(|e| e.fact.clone()).collect(),
        }),
        vetoed,
    }
}

fn strip_raw(facts: &[Fact]) -> Vec<Fact> {
    facts
        .iter()
        .cloned()
        .map(|mut f| {
            f.prov.raw_ref = None;
            f
        })
        .collect()
}

/// Builds the export artifact for a retention level. `seed` drives the
/// pseudonym permutation at L2.
pub fn export_trace(
    facts: &[Fact],
    hypotheses: &[Hypothesis],
    decisions: &[Decision],
    level: Retention,
    seed: u64,
) -> Json {
    match level {
        Retention::L0 => {
            json!({ "facts": facts, "hypotheses": hypotheses, "decisions": decisions })
        }
        Retention::L1 => {
            json!({ "facts": strip_raw(facts), "hypotheses": hypotheses, "decisions": decisions })
        }
        Retention::L2 => aggregate(facts, decisions, seed),
    }
}

fn aggregate(facts: &[Fact], decisions: &[Decision], seed: u64) -> Json {
    let mut answers: BTreeMap<String, u64> = BTreeMap::new();
    let mut reasons: BTreeMap<String, u64> = BTreeMap::new();
    let mut families: BTreeMap<&str, u64> = BTreeMap::new();
    let mut per_subject: BTreeMap<String, u64> = BTreeMap::new();
    for f in facts {
        *families.entry(f.family.as_str()).or_default() += 1;
    }
    for d in decisions {
        for r in &d.reasons {
            *reasons.entry(r.clone()).or_default() += 1;
        }
        if let Some(h) = d.hypothesis.as_ref().filter(|_| d.is_answer()) {
            *answers.entry(h.construct.clone()).or_default() += 1;
            for v in h.bindings.values() {
                *per_subject.entry(v.clone()).or_default() += 1;
            }
        }
    }
    // entity labels are replaced by a seeded permutation of neutral labels
    let mut slots: Vec<usize> = (0..per_subject.len()).collect();
    slots.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe));
    let width = per_subject.len().to_string().len().max(2);
    let mut subjects: BTreeMap<String, u64> = BTreeMap::new();
    for ((_, n), slot) in per_subject.into_iter().zip(slots) {
        subjects.insert(format!("subject_{:0width$}", slot + 1), n);
    }
    let n = decisions.len();
    let answered: u64 = answers.values().sum();
    let coverage = if n == 0 {
        Json::Null
    } else {
        json!(answered as f64 / n as f64)
    };
    let seen_entities: HashSet<&str> = facts
        .iter()
        .filter(|f| f.family != Family::Context && f.family != Family::Policy)
        .flat_map(|f| f.args.iter().map(String::as_str))
        .collect();
    json!({
        "answers": answers,
        "decisions": n,
        "coverage": coverage,
        "defer_reasons": reasons,
        "facts_by_family": families,
        "entities": seen_entities.len(),
        "subjects": subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact::Modality;
    use crate::reasoner::{rank_hypotheses, EvidenceItem, Violations};

    fn hyp(support: f64, modalities: &[Modality]) -> Hypothesis {
        Hypothesis {
            rule: "r".into(),
            construct: "confusion_candidate".into(),
            bindings: [("S".to_string(), "student_4".to_string())].into(),
            evidence: modalities
                .iter()
                .enumerate()
                .map(|(i, &m)| EvidenceItem {
                    alias: format!("a{i}"),
                    fact: FactId(format!("f{i}")),
                    conf: 0.88,
                    weight: 1.0,
                    modality: m,
                    time: TimeRef::instant(i as u64),
                })
                .collect(),
            raw_support: support.ln(),
            norm_support: support,
            violations: Violations::default(),
            time: TimeRef::interval(0, 5).unwrap(),
            anchor: FactId("f0".into()),
            hard_violations: vec![],
            deferring_policies: vec![],
        }
    }

    fn policies(text: &str) -> Vec<PolicyAst> {
        load_policies(text, &SchemaRegistry::default_classroom()).unwrap()
    }

    const CROSS: &str = "POLICY no_single_modality_alert HARD APPLIES * REQUIRE distinct_modalities(evidence) >= 2 ON VIOLATION defer";

    #[test]
    fn two_modalities_pass() {
        let o = evaluate_policies(
            &hyp(0.8, &[Modality::Language, Modality::Video]),
            &FactStore::new(),
            &policies(CROSS),
        );
        assert_eq!(o, PolicyOutcome::default());
    }

    #[test]
    fn single_modality_is_vetoed() {
        let o = evaluate_policies(
            &hyp(0.8, &[Modality::Video, Modality::Video]),
            &FactStore::new(),
            &policies(CROSS),
        );
        assert_eq!(o.hard, ["no_single_modality_alert"]);
    }

    #[test]
    fn low_asr_confidence_penalizes() {
        let ps = policies("POLICY asr SOFT APPLIES confusion_candidate REQUIRE min_conf(evidence, language) >= 0.9 ON VIOLATION penalize");
        let o = evaluate_policies(
            &hyp(0.8, &[Modality::Language, Modality::Video]),
            &FactStore::new(),
            &ps,
        );
        assert_eq!(o.p, 1);
        assert!(o.hard.is_empty());
    }

    #[test]
    fn unknown_context_key_fails_at_load() {
        let err = load_policies(
            "POLICY p SOFT APPLIES * REQUIRE context_active(weather, rain) ON VIOLATION penalize",
            &SchemaRegistry::default_classroom(),
        )
        .unwrap_err();
        assert!(matches!(err, GovernanceError::UnknownContextKey { .. }));
    }

    fn cfg(tau_s: f64, tau_delta: f64) -> GovernanceConfig {
        GovernanceConfig::new(tau_s, tau_delta, vec![], Retention::L1).unwrap()
    }

    #[test]
    fn answer_when_thresholds_met() {
        let mut second = hyp(0.5, &[Modality::Video]);
        second.construct = "other".into();
        let ranked = rank_hypotheses(vec![hyp(0.8, &[Modality::Video]), second]);
        let d = decide(&ranked, &cfg(0.6, 0.1));
        assert_eq!(d.outcome, Outcome::Answer);
        assert!(d.reasons.is_empty());
        assert!((d.margin.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn empty_list_defers() {
        let d = decide(&[], &cfg(0.6, 0.1));
        assert_eq!(d.outcome, Outcome::Defer);
        assert_eq!(d.reasons, [NO_HYPOTHESIS]);
    }

    #[test]
    fn hard_policy_dominates_support() {
        let mut h = hyp(0.8, &[Modality::Video]);
        h.hard_violations = vec!["no_single_modality_alert".into()];
        let d = decide(&[h], &cfg(0.6, 0.1));
        assert_eq!(d.outcome, Outcome::Defer);
        assert_eq!(d.reasons, ["hard_policy:no_single_modality_alert"]);
        assert!(d.hypothesis.is_none());
        assert!(d.vetoed);
    }

    #[test]
    fn thresholds_are_checked() {
        assert!(GovernanceConfig::new(1.5, 0.1, vec![], Retention::L0).is_err());
        assert!(GovernanceConfig::new(0.5, -0.1, vec![], Retention::L0).is_err());
    }

    #[test]
    fn aggregate_counts_answers_without_names() {
        let ds: Vec<Decision> = (0..3)
            .map(|i| {
                let mut h = hyp(0.9, &[Modality::Video, Modality::Language]);
                h.bindings.insert("S".into(), format!("student_{i}"));
                decide(&[h], &cfg(0.6, 0.1))
            })
            .collect();
        let out = export_trace(&[], &[], &ds, Retention::L2, 7);
        assert_eq!(out["answers"], json!({"confusion_candidate": 3}));
        assert!(!out.to_string().contains("student_"));
    }
}
