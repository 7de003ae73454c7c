//! How evidence confidence, clause weights and penalties combine into a
//! support score, and how the margin to the runner-up gates an answer.

use std::collections::BTreeMap;

use classlogic::fact::{FactId, Modality, TimeRef};
use classlogic::reasoner::{
    margin, rank_hypotheses, support, EvidenceItem, Hypothesis, SupportConfig, Violations,
};

fn item(alias: &str, id: &str, conf: f64, weight: f64, modality: Modality) -> EvidenceItem {
    EvidenceItem {
        alias: alias.into(),
        fact: FactId(id.into()),
        conf,
        weight,
        modality,
        time: TimeRef::instant(10),
    }
}

fn hypothesis(construct: &str, evidence: Vec<EvidenceItem>, v: u32) -> Hypothesis {
    Hypothesis {
        rule: construct.into(),
        construct: construct.into(),
        bindings: BTreeMap::from([("S".to_string(), "student_4".to_string())]),
        anchor: evidence[0].fact.clone(),
        time: TimeRef::instant(10),
        evidence,
        raw_support: 0.0,
        norm_support: 0.0,
        violations: Violations { v, p: 0 },
        hard_violations: vec![],
        deferring_policies: vec![],
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SupportConfig::default();
    let mut confused = hypothesis(
        "confusion_candidate",
        vec![
            item("a", "f1", 0.76, 1.0, Modality::Video),
            item("r", "f2", 0.88, 2.0, Modality::Language),
            item("g", "f3", 0.81, 1.0, Modality::Video),
        ],
        0,
    );
    // the same fact cited twice counts once
    let mut doubled = confused.clone();
    doubled
        .evidence
        .push(item("r2", "f2", 0.88, 2.0, Modality::Language));
    let mut off_task = hypothesis(
        "off_task",
        vec![
            item("g", "f3", 0.81, 1.0, Modality::Video),
            item("x", "f4", 0.55, 1.0, Modality::Audio),
        ],
        1,
    );

    for h in [&mut confused, &mut doubled, &mut off_task] {
        let (raw, norm) = support(h, &cfg)?;
        println!(
            "{:<20} {} items  raw {raw:>8.4}  norm {norm:.4}",
            h.construct,
            h.evidence.len()
        );
        h.rescore(&cfg)?;
    }

    let ranked = rank_hypotheses(vec![off_task, confused]);
    println!(
        "top {} with margin {:.4}",
        ranked[0].construct,
        margin(&ranked)
    );
    Ok(())
}
