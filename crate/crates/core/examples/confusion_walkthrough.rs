//! The bundled confusion prompt: parse facts, match the rules, govern and
//! print each decision with the evidence it cites.

use classlogic::bundled;
use classlogic::dsl::{parse_facts, parse_rules};
use classlogic::fact::{FactStore, SchemaRegistry};
use classlogic::governance::{load_policies, GovernanceConfig, Retention};
use classlogic::pipeline::reason;
use classlogic::reasoner::compile_rules;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let (facts, errors) = parse_facts(bundled::CONFUSION_FACTS);
    assert!(errors.is_empty(), "{errors:?}");
    let store = FactStore::from_facts(facts, &reg)?;

    let (asts, errors) = parse_rules(bundled::RULES);
    assert!(errors.is_empty(), "{errors:?}");
    let rules = compile_rules(&asts, &reg)?;
    let policies = load_policies(bundled::POLICIES, &reg)?;

    for tau_s in [0.6, 0.99] {
        let cfg = GovernanceConfig::new(tau_s, 0.1, policies.clone(), Retention::L1)?;
        let r = reason(&store, &rules, &cfg)?;
        println!("tau_s = {tau_s}");
        for d in &r.decisions {
            let support = d.support.map_or("-".into(), |s| format!("{s:.4}"));
            println!(
                "  {:?} support {support} reasons {:?}",
                d.outcome, d.reasons
            );
            if let Some(c) = &d.candidate {
                println!(
                    "    {} {:?} over [{}, {}]",
                    c.construct,
                    c.bindings,
                    c.time.start(),
                    c.time.end()
                );
                for id in &c.evidence {
                    let f = store.by_id(id).expect("cited fact is stored");
                    let fields: Vec<String> = f.fields().iter().map(ToString::to_string).collect();
                    println!(
                        "      {} {}({}) conf {:.2}",
                        id.as_str(),
                        f.predicate,
                        fields.join(", "),
                        f.conf.value()
                    );
                }
            }
        }
    }
    Ok(())
}
