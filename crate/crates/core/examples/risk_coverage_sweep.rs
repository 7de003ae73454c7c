//! Reason over a simulated lesson with noisy sensors and sweep the support
//! threshold. A loose confusion rule fires on stray help requests, so it
//! needs a higher threshold than the bundled one to keep its risk down.

use classlogic::bundled;
use classlogic::dsl::parse_rules;
use classlogic::eval::{curve_csv, records, risk_coverage_curve, tau_grid};
use classlogic::fact::{FactStore, Modality, SchemaRegistry};
use classlogic::governance::{load_policies, GovernanceConfig, Retention};
use classlogic::pipeline::reason;
use classlogic::reasoner::compile_rules;
use classlogic::simgen::{generate_episode, NoiseModel, SimConfig};

const LOOSE: &str = "
RULE loose_confusion
  CONCLUDE confusion_candidate(S) AT r
  MATCH r: EVENT(S, help_request, ?)
  MATCH g: OBS(S, gaze_target, ?)
  WHERE SOFT within(g, r, 30)
END
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let mut sim = SimConfig::from_json(include_str!("../data/sim_default.json"))?;
    sim.distractor_rate = 0.8;
    for m in [Modality::Video, Modality::Language, Modality::Audio] {
        let noise = NoiseModel {
            substitution_rate: 0.15,
            ..NoiseModel::clean()
        };
        sim.noise.insert(m, noise);
    }
    let ep = generate_episode(&sim, &reg)?;
    let store = FactStore::from_facts(ep.observed_facts(&reg), &reg)?;
    let labels: Vec<_> = ep
        .gt
        .labels
        .iter()
        .filter(|l| l.construct == "confusion_candidate")
        .cloned()
        .collect();

    // decide once with no threshold, then replay the sweep over the records
    let cfg = GovernanceConfig::new(
        0.0,
        0.0,
        load_policies(bundled::POLICIES, &reg)?,
        Retention::L1,
    )?;
    for (name, text) in [("bundled", bundled::RULES), ("loose", LOOSE)] {
        let (mut asts, _) = parse_rules(text);
        asts.retain(|r| r.construct == "confusion_candidate");
        let rules = compile_rules(&asts, &reg)?;
        let r = reason(&store, &rules, &cfg)?;
        let recs = records(&r.decisions, &labels);
        println!(
            "{name}: {} decisions, {} correct, {} confusion labels",
            recs.len(),
            recs.iter().filter(|x| x.correct).count(),
            labels.len()
        );
        let curve = risk_coverage_curve(&recs, &tau_grid(0.0, 1.0, 0.1)?)?;
        print!("{}", curve_csv(&curve));
        println!();
    }
    Ok(())
}
