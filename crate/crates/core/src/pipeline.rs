//! Facts in, governed decisions out.
//!
//! Matching yields one hypothesis per satisfying fact tuple, so a single
//! classroom moment can be supported by several traces (two gaze samples
//! during the same help request, say). Hypotheses with the same construct and
//! bindings whose time spans overlap are treated as alternative traces of one
//! claim: the best-supported trace is kept and decided on.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fact::{FactStore, TimeRef};
use crate::governance::{decide, govern, Decision, GovernanceConfig, GovernanceError};
use crate::reasoner::{match_rule, rank_hypotheses, CompiledRule, Hypothesis};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Reasoned {
    /// Every governed hypothesis, grouped by rule in rule order.
    pub hypotheses: Vec<Hypothesis>,
    /// One decision per claim, ordered by time then subject.
    pub decisions: Vec<Decision>,
}

impl Reasoned {
    pub fn answers(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter().filter(|d| d.is_answer())
    }
}

/// Partitions hypotheses into claims: same construct and bindings, with
/// overlapping time spans chained together.
pub fn claims(hs: &[Hypothesis]) -> Vec<Vec<usize>> {
    let mut by_subject: BTreeMap<(&str, &BTreeMap<String, String>), Vec<usize>> = BTreeMap::new();
    for (i, h) in hs.iter().enumerate() {
        by_subject
            .entry((&h.construct, &h.bindings))
            .or_default()
            .push(i);
    }
    let mut out = Vec::new();
    for (_, mut idx) in by_subject {
        idx.sort_by_key(|&i| (hs[i].time.start(), hs[i].time.end(), i));
        let mut current: Vec<usize> = Vec::new();
        let mut span: Option<TimeRef> = None;
        for i in idx {
            match span {
                Some(s) if s.overlaps(&hs[i].time) => {
                    span = Some(s.hull(&hs[i].time));
                    current.push(i);
                }
                _ => {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    span = Some(hs[i].time);
                    current.push(i);
                }
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

pub fn reason(
    store: &FactStore,
    rules: &[CompiledRule],
    cfg: &GovernanceConfig,
) -> Result<Reasoned, GovernanceError> {
    let mut hypotheses = Vec::new();
    for rule in rules {
        hypotheses.extend(match_rule(rule, store, &cfg.support)?);
    }
    govern(&mut hypotheses, store, cfg)?;
    let mut decisions: Vec<Decision> = claims(&hypotheses)
        .into_iter()
        .map(|claim| {
            let ranked =
                rank_hypotheses(claim.into_iter().map(|i| hypotheses[i].clone()).collect());
            decide(&ranked[..1], cfg)
        })
        .collect();
    decisions.sort_by(|a, b| {
        let key = |d: &Decision| {
            d.candidate
                .as_ref()
                .map(|c| (c.time, c.construct.clone(), c.bindings.clone()))
        };
        key(a).cmp(&key(b))
    });
    if decisions.is_empty() {
        decisions.push(decide(&[], cfg));
    }
    Ok(Reasoned {
        hypotheses,
        decisions,
    })
}
