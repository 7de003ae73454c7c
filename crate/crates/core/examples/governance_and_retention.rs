//! Policies at work: a single-modality alert is vetoed, a weak transcript is
//! penalized, and each retention level exports a different amount of detail.

use classlogic::bundled;
use classlogic::dsl::{parse_facts, parse_rules};
use classlogic::fact::{FactStore, Modality, SchemaRegistry};
use classlogic::governance::{export_trace, load_policies, GovernanceConfig, Retention};
use classlogic::pipeline::reason;
use classlogic::reasoner::compile_rules;

// a help request heard only through a shaky transcript
const WEAK_ASR: &str = "
EVENT(teacher, open_question, class, [120,123], 0.97)
EVENT(student_4, failed_attempt, proof_step, [124,127], 0.76)
UTTER(student_4, help_request, step_clarification, [128,130], 0.45)
OBS(student_4, gaze_target, worksheet, 129, 0.81)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let rules = compile_rules(&parse_rules(bundled::RULES).0, &reg)?;
    let policies = load_policies(bundled::POLICIES, &reg)?;
    let cfg = GovernanceConfig::new(0.6, 0.1, policies, Retention::L1)?;

    let (mut facts, _) = parse_facts(bundled::CONFUSION_FACTS);
    for (i, f) in facts.iter_mut().enumerate() {
        f.prov.raw_ref = Some(format!("clips/lesson_07/{i:03}.mp4"));
    }
    let store = FactStore::from_facts(facts.clone(), &reg)?;
    let r = reason(&store, &rules, &cfg)?;
    for level in [Retention::L0, Retention::L1, Retention::L2] {
        let text =
            serde_json::to_string(&export_trace(&facts, &r.hypotheses, &r.decisions, level, 3))?;
        println!(
            "{level:?}: {} bytes, raw clips {}, student names {}",
            text.len(),
            text.contains("clips/"),
            text.contains("student_4")
        );
        if level == Retention::L2 {
            println!("  {text}");
        }
    }

    // the same evidence attributed to one camera alone
    let mut video_only = facts.clone();
    for f in &mut video_only {
        f.prov.modality = Modality::Video;
    }
    let r = reason(&FactStore::from_facts(video_only, &reg)?, &rules, &cfg)?;
    println!(
        "video only: {:?} {:?}",
        r.decisions[0].outcome, r.decisions[0].reasons
    );

    let (weak, _) = parse_facts(WEAK_ASR);
    let r = reason(&FactStore::from_facts(weak, &reg)?, &rules, &cfg)?;
    for d in &r.decisions {
        let h = &r.hypotheses[0];
        println!(
            "weak transcript: {:?} support {:.4} with {} penalty, reasons {:?}",
            d.outcome,
            d.support.unwrap_or(0.0),
            h.violations.p,
            d.reasons
        );
    }
    Ok(())
}
