//! Rule compilation, matching and support scoring.
//!
//! A matched rule yields one [`Hypothesis`] per satisfying tuple of facts
//! (one fact per `MATCH` clause). Its support is
//!
//! ```text
//! raw  = Σ w_f · ln(max(c_f, ε)) − λ_v · V − λ_p · P
//! norm = exp(raw / Σ w_f)
//! ```
//!
//! summed over the distinct evidence facts, where `V` counts failed soft
//! constraints and `P` counts policy violations. `norm` is the weighted
//! geometric mean of the evidence confidences scaled by the penalties and
//! lies in `(0, 1]`.

mod compile;
mod matcher;

pub use compile::{compile_rule, compile_rules, CompiledRule};
pub use matcher::{check_evidence_sufficiency, count_constraint_violations, match_rule};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fact::{FactId, Modality, TimeRef, CONFIDENCE_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonError {
    #[error("rule `{rule}`: unknown predicate `{predicate}`")]
    UnknownPredicate { rule: String, predicate: String },
    #[error(
        "rule `{rule}`: pattern {pattern} has {found} positions, `{predicate}` has {expected}"
    )]
    PatternArity {
        rule: String,
        pattern: String,
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("support weights sum to {0}, must be positive")]
    NonPositiveWeight(f64),
    #[error("invalid support configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub lambda_v: f64,
    pub lambda_p: f64,
    pub floor: f64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig {
            lambda_v: 1.0,
            lambda_p: 2.0,
            floor: CONFIDENCE_FLOOR,
        }
    }
}

impl SupportConfig {
    pub fn new(lambda_v: f64, lambda_p: f64, floor: f64) -> Result<Self, ReasonError> {
        if !(lambda_v >= 0.0 && lambda_p >= 0.0) {
            return Err(ReasonError::Config(
                "penalty weights must be non-negative".into(),
            ));
        }
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(ReasonError::Config(
                "confidence floor must lie in (0, 1]".into(),
            ));
        }
        Ok(SupportConfig {
            lambda_v,
            lambda_p,
            floor,
        })
    }
}

/// One cited fact, with what support scoring and policies need from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub alias: String,
    pub fact: FactId,
    pub conf: f64,
    pub weight: f64,
    pub modality: Modality,
    pub time: TimeRef,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Failed soft constraints.
    pub v: u32,
    /// Policy violations.
    pub p: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub rule: String,
    pub construct: String,
    pub bindings: BTreeMap<String, String>,
    /// One entry per `MATCH` clause, in clause order.
    pub evidence: Vec<EvidenceItem>,
    pub raw_support: f64,
    pub norm_support: f64,
    pub violations: Violations,
    /// Hull of the evidence intervals (background CONTEXT facts excluded when
    /// anything else is cited).
    pub time: TimeRef,
    /// Fact bound to the rule's anchor alias.
    pub anchor: FactId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hard_violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deferring_policies: Vec<String>,
}

impl Hypothesis {
    pub fn evidence_ids(&self) -> Vec<&FactId> {
        self.evidence.iter().map(|e| &e.fact).collect()
    }

    /// Distinct cited facts, first occurrence wins.
    pub fn distinct_evidence(&self) -> Vec<&EvidenceItem> {
        let mut seen = HashSet::new();
        self.evidence
            .iter()
            .filter(|e| seen.insert(&e.fact))
            .collect()
    }

    pub fn modalities(&self) -> Vec<Modality> {
        let mut m: Vec<Modality> = self.evidence.iter().map(|e| e.modality).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Recomputes both supports from the evidence and current violation counts.
    pub fn rescore(&mut self, cfg: &SupportConfig) -> Result<(), ReasonError> {
        let (raw, norm) = support(self, cfg)?;
        self.raw_support = raw;
        self.norm_support = norm;
        Ok(())
    }

    /// Subject key: construct and bindings rendered as `c(k=v, ...)`.
    pub fn subject(&self) -> String {
        let b: Vec<String> = self
            .bindings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{}({})", self.construct, b.join(", "))
    }
}

/// Raw and normalized support of a hypothesis.
pub fn support(h: &Hypothesis, cfg: &SupportConfig) -> Result<(f64, f64), ReasonError> {
    let items = h.distinct_evidence();
    let total_w: f64 = items.iter().map(|e| e.weight).sum();
    if !(total_w > 0.0) {
        return Err(ReasonError::NonPositiveWeight(total_w));
    }
    let log_mass: f64 = items
        .iter()
        .map(|e| e.weight * e.conf.clamp(cfg.floor, 1.0).ln())
        .sum();
    let raw = log_mass
        - cfg.lambda_v * f64::from(h.violations.v)
        - cfg.lambda_p * f64::from(h.violations.p);
    let norm = (raw / total_w).exp().clamp(f64::MIN_POSITIVE, 1.0);
    Ok((raw, norm))
}

fn tie_key(h: &Hypothesis) -> (&str, &BTreeMap<String, String>, Vec<&FactId>) {
    (h.construct.as_str(), &h.bindings, h.evidence_ids())
}

/// Descending normalized support; ties by construct, then bindings, then evidence.
pub fn rank_hypotheses(mut hs: Vec<Hypothesis>) -> Vec<Hypothesis> {
    hs.sort_by(|a, b| {
        b.norm_support
            .partial_cmp(&a.norm_support)
            .unwrap_or(Ordering::Equal)
            .then_with(|| tie_key(a).cmp(&tie_key(b)))
    });
    hs
}

/// Margin between the top two normalized supports; 1.0 without a runner-up.
pub fn margin(ranked: &[Hypothesis]) -> f64 {
    match ranked {
        [top, second, ..] => top.norm_support - second.norm_support,
        _ => 1.0,
    }
}
