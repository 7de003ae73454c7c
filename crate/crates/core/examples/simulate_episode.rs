//! Generate a seeded synthetic lesson, then look at what the noisy sensors
//! kept of the ground truth.

use std::collections::BTreeMap;

use classlogic::dsl::serialize_fact;
use classlogic::fact::SchemaRegistry;
use classlogic::simgen::{generate_episode, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let cfg = SimConfig::from_json(include_str!("../data/sim_default.json"))?;
    let ep = generate_episode(&cfg, &reg)?;
    let observed = ep.observed_facts(&reg);

    let mut by_family: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for f in &ep.gt.facts {
        by_family.entry(f.family.as_str()).or_default().0 += 1;
    }
    for f in &observed {
        by_family.entry(f.family.as_str()).or_default().1 += 1;
    }
    println!("seed {} over {} ticks", cfg.seed, cfg.duration + 1);
    for (family, (gt, obs)) in &by_family {
        println!("  {family:<8} ground truth {gt:>4}  observed {obs:>4}");
    }

    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &ep.gt.labels {
        *labels.entry(&l.construct).or_default() += 1;
    }
    println!("labels {labels:?}");

    println!("first observed facts:");
    for f in observed.iter().take(5) {
        println!("  {}", serialize_fact(f));
    }

    // same seed, same episode
    assert_eq!(generate_episode(&cfg, &reg)?, ep);
    Ok(())
}
