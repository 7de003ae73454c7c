//! Evaluation: fact grounding, construct-level accuracy, selective prediction,
//! calibration, contradictions and early warning.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::fact::{facts_conflict, Fact, FactStore, SchemaRegistry, TimeRef};
use crate::governance::Decision;
use crate::reasoner::Hypothesis;
use crate::simgen::Label;

/// Temporal overlap required for a construct decision to count as a label match.
pub const CONSTRUCT_IOU: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
    #[error("no accepted decisions to calibrate")]
    NoneAccepted,
    #[error("invalid {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchCriterion {
    pub iou: f64,
    pub require_args: bool,
}

impl Default for MatchCriterion {
    fn default() -> Self {
        MatchCriterion {
            iou: 0.5,
            require_args: true,
        }
    }
}

impl MatchCriterion {
    pub fn new(iou: f64, require_args: bool) -> Result<Self, EvalError> {
        if !(iou > 0.0 && iou <= 1.0) {
            return Err(EvalError::Invalid("IoU threshold"));
        }
        Ok(MatchCriterion { iou, require_args })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grounding {
    pub n_predicted: usize,
    pub n_gold: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Matched pairs whose arguments and value all agree.
    pub argument_accuracy: Option<f64>,
    /// Matched pairs with the same provenance modality.
    pub provenance_accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// One-to-one greedy matching by descending temporal IoU. Returns `(pred, gold)`
/// index pairs. `key` buckets facts that may be paired at all.
fn greedy_match<K: std::hash::Hash + Eq>(
    pred: &[(K, TimeRef)],
    gold: &[(K, TimeRef)],
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut buckets: HashMap<&K, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (i, (k, _)) in pred.iter().enumerate() {
        buckets.entry(k).or_default().0.push(i);
    }
    for (j, (k, _)) in gold.iter().enumerate() {
        if let Some(b) = buckets.get_mut(k) {
            b.1.push(j);
        }
    }
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (_, (ps, mut gs)) in buckets {
        if gs.is_empty() {
            continue;
        }
        gs.sort_by_key(|&j| gold[j].1.start());
        let max_len = gs
            .iter()
            .map(|&j| gold[j].1.end() - gold[j].1.start())
            .max()
            .unwrap_or(0);
        for i in ps {
            let t = pred[i].1;
            let hi = gs.partition_point(|&j| gold[j].1.start() <= t.end());
            let lo = gs.partition_point(|&j| gold[j].1.start() < t.start().saturating_sub(max_len));
            for &j in &gs[lo..hi] {
                let iou = t.iou(&gold[j].1);
                if iou >= threshold {
                    cands.push((iou, i, j));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gold.len()];
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

pub fn grounding_fidelity(predicted: &[Fact], gold: &[Fact], crit: &MatchCriterion) -> Grounding {
    let key = |f: &Fact| {
        let args = if crit.require_args {
            f.args.clone()
        } else {
            Vec::new()
        };
        (f.family, f.predicate.clone(), args)
    };
    let p: Vec<_> = predicted.iter().map(|f| (key(f), f.time)).collect();
    let g: Vec<_> = gold.iter().map(|f| (key(f), f.time)).collect();
    let pairs = greedy_match(&p, &g, crit.iou);
    let m = pairs.len();
    let args_ok = pairs
        .iter()
        .filter(|&&(i, j)| predicted[i].fields() == gold[j].fields())
        .count();
    let prov_ok = pairs
        .iter()
        .filter(|&&(i, j)| predicted[i].prov.modality == gold[j].prov.modality)
        .count();
    let precision = ratio(m, predicted.len()).unwrap_or(1.0);
    let recall = ratio(m, gold.len()).unwrap_or(1.0);
    Grounding {
        n_predicted: predicted.len(),
        n_gold: gold.len(),
        matched: m,
        precision,
        recall,
        f1: f1(precision, recall),
        argument_accuracy: ratio(args_ok, m),
        provenance_accuracy: ratio(prov_ok, m),
    }
}

/// A decision reduced to what selective-prediction metrics need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    /// Governed normalized support; `None` when nothing was hypothesized.
    pub support: Option<f64>,
    /// A policy forced deferral.
    pub vetoed: bool,
    /// The candidate agrees with a gold label.
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskCoveragePoint {
    pub tau: f64,
    pub coverage: f64,
    pub selective_risk: Option<f64>,
    pub n_accepted: usize,
    pub n_errors: usize,
}

pub fn risk_coverage_curve(
    records: &[Record],
    grid: &[f64],
) -> Result<Vec<RiskCoveragePoint>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(grid
        .iter()
        .map(|&tau| {
            let accepted: Vec<&Record> = records
                .iter()
                .filter(|r| !r.vetoed && r.support.is_some_and(|s| s >= tau))
                .collect();
            let n_errors = accepted.iter().filter(|r| !r.correct).count();
            RiskCoveragePoint {
                tau,
                coverage: accepted.len() as f64 / records.len() as f64,
                selective_risk: ratio(n_errors, accepted.len()),
                n_accepted: accepted.len(),
                n_errors,
            }
        })
        .collect())
}

/// Inclusive grid `start, start + step, ..., end`.
pub fn tau_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(EvalError::Invalid("threshold grid"));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // rounded so 3 * 0.1 prints as 0.3
    Ok((0..=n)
        .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
        .collect())
}

/// Expected calibration error over `(confidence, correct)` pairs with
/// equal-width bins on `[0, 1]`.
pub fn ece(records: &[(f64, bool)], n_bins: usize) -> Result<f64, EvalError> {
    if n_bins == 0 {
        return Err(EvalError::Invalid("bin count"));
    }
    if records.is_empty() {
        return Err(EvalError::NoneAccepted);
    }
    let mut bins = vec![(0usize, 0.0f64, 0usize); n_bins];
    for &(c, ok) in records {
        let b = ((c * n_bins as f64).floor() as usize).min(n_bins - 1);
        bins[b].0 += 1;
        bins[b].1 += c;
        bins[b].2 += usize::from(ok);
    }
    let n = records.len() as f64;
    Ok(bins
        .iter()
        .filter(|b| b.0 > 0)
        .map(|&(k, conf, hits)| (k as f64 / n) * (hits as f64 / k as f64 - conf / k as f64).abs())
        .sum())
}

/// Share of hypotheses citing at least one pair of conflicting facts.
pub fn contradiction_rate(
    hypotheses: &[Hypothesis],
    store: &FactStore,
    registry: &SchemaRegistry,
) -> f64 {
    if hypotheses.is_empty() {
        return 0.0;
    }
    let bad = hypotheses
        .iter()
        .filter(|h| {
            let facts: Vec<&Fact> = h
                .distinct_evidence()
                .iter()
                .filter_map(|e| store.by_id(&e.fact))
                .collect();
            facts.iter().enumerate().any(|(i, a)| {
                facts[i + 1..]
                    .iter()
                    .any(|b| facts_conflict(a, b, registry))
            })
        })
        .count();
    bad as f64 / hypotheses.len() as f64
}

/// Decisions scored against labels: same construct, same bindings and
/// temporal IoU of at least [`CONSTRUCT_IOU`]. Matching is one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructScore {
    pub n_answers: usize,
    pub n_labels: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

type ClaimKey = (String, BTreeMap<String, String>);

fn label_pairs(
    decisions: &[Decision],
    labels: &[Label],
    answered_only: bool,
) -> (Vec<usize>, Vec<(usize, usize)>) {
    let idx: Vec<usize> = decisions
        .iter()
        .enumerate()
        .filter(|(_, d)| d.candidate.is_some() && (!answered_only || d.is_answer()))
        .map(|(i, _)| i)
        .collect();
    let p: Vec<(ClaimKey, TimeRef)> = idx
        .iter()
        .map(|&i| {
            let c = decisions[i].candidate.as_ref().expect("filtered");
            ((c.construct.clone(), c.bindings.clone()), c.time)
        })
        .collect();
    let g: Vec<(ClaimKey, TimeRef)> = labels
        .iter()
        .map(|l| ((l.construct.clone(), l.bindings.clone()), l.time))
        .collect();
    let pairs = greedy_match(&p, &g, CONSTRUCT_IOU)
        .into_iter()
        .map(|(i, j)| (idx[i], j))
        .collect();
    (idx, pairs)
}

pub fn construct_score(decisions: &[Decision], labels: &[Label]) -> ConstructScore {
    let (answered, pairs) = label_pairs(decisions, labels, true);
    let tp = pairs.len();
    let precision = ratio(tp, answered.len()).unwrap_or(1.0);
    let recall = ratio(tp, labels.len()).unwrap_or(1.0);
    ConstructScore {
        n_answers: answered.len(),
        n_labels: labels.len(),
        true_positives: tp,
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

/// One record per decision; a candidate is correct when it matches a label.
pub fn records(decisions: &[Decision], labels: &[Label]) -> Vec<Record> {
    let (_, pairs) = label_pairs(decisions, labels, false);
    let mut correct = vec![false; decisions.len()];
    for (i, _) in pairs {
        correct[i] = true;
    }
    decisions
        .iter()
        .zip(correct)
        .map(|(d, correct)| Record {
            support: d.support,
            vetoed: d.vetoed,
            correct,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Episode {
    pub time: TimeRef,
    pub construct: String,
    pub entity: String,
    /// First observable tick; defaults to the interval start.
    pub onset: u64,
}

impl Episode {
    pub fn new(time: TimeRef, construct: impl Into<String>, entity: impl Into<String>) -> Self {
        Episode {
            time,
            construct: construct.into(),
            entity: entity.into(),
            onset: time.start(),
        }
    }

    pub fn with_onset(mut self, onset: u64) -> Self {
        self.onset = onset;
        self
    }
}

impl From<&Label> for Episode {
    fn from(l: &Label) -> Self {
        Episode::new(l.time, l.construct.clone(), l.entity()).with_onset(l.onset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EarlyWarning {
    pub matched: usize,
    pub false_alerts: usize,
    /// Mean of onset minus alert start over matched pairs; positive is early.
    pub mean_lead_time: Option<f64>,
    /// False alerts per hour of timeline, one tick per second.
    pub false_alert_rate: f64,
    pub mean_iou: Option<f64>,
    pub missed_rate: Option<f64>,
}

/// An alert matches a gold episode with the same construct and entity when
/// its start lies in `[onset - window, end]`. Each episode takes the earliest
/// unused qualifying alert.
pub fn early_warning_metrics(
    alerts: &[Episode],
    gold: &[Episode],
    window: u64,
    duration_ticks: u64,
) -> EarlyWarning {
    let mut order: Vec<usize> = (0..alerts.len()).collect();
    order.sort_by_key(|&i| (alerts[i].time.start(), i));
    let mut used = vec![false; alerts.len()];
    let mut gold_order: Vec<&Episode> = gold.iter().collect();
    gold_order.sort();
    let mut leads = Vec::new();
    let mut ious = Vec::new();
    for g in gold_order {
        let lo = g.onset.saturating_sub(window);
        let hit = order.iter().copied().find(|&i| {
            let a = &alerts[i];
            !used[i]
                && a.construct == g.construct
                && a.entity == g.entity
                && (lo..=g.time.end()).contains(&a.time.start())
        });
        if let Some(i) = hit {
            used[i] = true;
            leads.push(g.onset as f64 - alerts[i].time.start() as f64);
            ious.push(alerts[i].time.iou(&g.time));
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let false_alerts = used.iter().filter(|u| !**u).count();
    let hours = duration_ticks.max(1) as f64 / 3600.0;
    EarlyWarning {
        matched: leads.len(),
        false_alerts,
        mean_lead_time: mean(&leads),
        false_alert_rate: false_alerts as f64 / hours,
        mean_iou: mean(&ious),
        missed_rate: ratio(gold.len() - leads.len(), gold.len()),
    }
}

/// Everything `evaluate` reports for one prediction/gold pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grounding: Option<Grounding>,
    pub constructs: ConstructScore,
    pub curve: Vec<RiskCoveragePoint>,
    /// Over every decision with a candidate, at its governed support.
    pub ece: Option<f64>,
    pub early_warning: EarlyWarning,
}

impl Report {
    pub fn build(
        decisions: &[Decision],
        labels: &[Label],
        grounding: Option<Grounding>,
        grid: &[f64],
        window: u64,
        duration_ticks: u64,
    ) -> Result<Report, EvalError> {
        let recs = records(decisions, labels);
        let curve = risk_coverage_curve(&recs, grid)?;
        let conf: Vec<(f64, bool)> = recs
            .iter()
            .filter(|r| !r.vetoed)
            .filter_map(|r| r.support.map(|s| (s, r.correct)))
            .collect();
        let alerts: Vec<Episode> = decisions
            .iter()
            .filter(|d| d.is_answer())
            .filter_map(|d| d.candidate.as_ref())
            .map(|c| {
                Episode::new(
                    c.time,
                    c.construct.clone(),
                    c.bindings.values().cloned().collect::<Vec<_>>().join(","),
                )
            })
            .collect();
        let gold: Vec<Episode> = labels.iter().map(Episode::from).collect();
        Ok(Report {
            grounding,
            constructs: construct_score(decisions, labels),
            curve,
            ece: ece(&conf, 10).ok(),
            early_warning: early_warning_metrics(&alerts, &gold, window, duration_ticks),
        })
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        if let Some(g) = &self.grounding {
            s.push_str(&format!(
                "grounding    precision {:.4}  recall {:.4}  f1 {:.4}  args {}  provenance {}\n",
                g.precision,
                g.recall,
                g.f1,
                opt(g.argument_accuracy),
                opt(g.provenance_accuracy)
            ));
        }
        let c = &self.constructs;
        s.push_str(&format!(
            "constructs   precision {:.4}  recall {:.4}  f1 {:.4}  ({} answers, {} labels)\n",
            c.precision, c.recall, c.f1, c.n_answers, c.n_labels
        ));
        s.push_str(&format!("calibration  ece {}\n", opt(self.ece)));
        let e = &self.early_warning;
        s.push_str(&format!(
            "early        lead {}  false/h {:.4}  iou {}  missed {}\n",
            opt(e.mean_lead_time),
            e.false_alert_rate,
            opt(e.mean_iou),
            opt(e.missed_rate)
        ));
        s.push_str("tau     coverage  risk\n");
        for p in &self.curve {
            s.push_str(&format!(
                "{:<7.3} {:<9.4} {}\n",
                p.tau,
                p.coverage,
                opt(p.selective_risk)
            ));
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        curve_csv(&self.curve)
    }
}

pub fn curve_csv(curve: &[RiskCoveragePoint]) -> String {
    let mut s = String::from("tau,coverage,selective_risk\n");
    for p in curve {
        let risk = p.selective_risk.map_or(String::new(), |r| r.to_string());
        s.push_str(&format!("{},{},{}\n", p.tau, p.coverage, risk));
    }
    s
}
