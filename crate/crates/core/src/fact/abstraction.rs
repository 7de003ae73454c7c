use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ArgSource, Confidence, Fact, FactId, Family, IdAllocator, Provenance, SchemaRegistry, TimeRef,
    Value,
};

/// Standardized output of a perceptual module before abstraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateObservation {
    pub kind: String,
    pub entities: Vec<String>,
    pub time: TimeRef,
    pub conf: Confidence,
    pub prov: Provenance,
    #[serde(default)]
    pub payload: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub index: usize,
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Abstraction {
    pub facts: Vec<Fact>,
    pub skipped: Vec<SkipRecord>,
}

/// Maps observations to facts through the registry's mapping table, then
/// appends the context facts unchanged. Confidence and provenance are copied
/// from the observation untouched. Observations that cannot be mapped are
/// listed in `skipped`.
pub fn abstract_observations(
    obs: &[CandidateObservation],
    context: &[Fact],
    registry: &SchemaRegistry,
) -> Abstraction {
    let mut ids = IdAllocator::new();
    for c in context {
        ids.reserve(&c.id);
    }
    let mut out = Abstraction::default();
    for (index, o) in obs.iter().enumerate() {
        let skip = |reason: String| SkipRecord {
            index,
            kind: o.kind.clone(),
            reason,
        };
        if o.entities.is_empty() {
            out.skipped.push(skip("observation names no entity".into()));
            continue;
        }
        let Some(mapping) = registry.mapping(&o.kind) else {
            out.skipped
                .push(skip(format!("unmapped observation kind `{}`", o.kind)));
            continue;
        };
        let resolve = |src: &ArgSource| -> Result<Value, String> {
            match src {
                ArgSource::Entity(i) => o
                    .entities
                    .get(*i)
                    .map(|e| Value::Symbol(e.clone()))
                    .ok_or_else(|| format!("missing entity #{i}")),
                ArgSource::Payload(k) => o
                    .payload
                    .get(k)
                    .cloned()
                    .ok_or_else(|| format!("missing payload `{k}`")),
                ArgSource::Const(c) => Ok(Value::Symbol(c.clone())),
            }
        };
        let args: Result<Vec<String>, String> = mapping
            .args
            .iter()
            .map(|src| resolve(src).map(|v| v.key()))
            .collect();
        let value = mapping.value.as_ref().map(resolve).transpose();
        let (args, value) = match (args, value) {
            (Ok(a), Ok(v)) => (a, v),
            (Err(e), _) | (_, Err(e)) => {
                out.skipped.push(skip(e));
                continue;
            }
        };
        let family = registry
            .spec(&mapping.predicate)
            .map(|s| s.family)
            .unwrap_or(Family::Obs);
        let mut fact = Fact {
            id: FactId(String::new()),
            predicate: mapping.predicate.clone(),
            family,
            args,
            value,
            time: o.time,
            conf: o.conf,
            prov: o.prov.clone(),
        };
        fact.id = ids.assign(&fact);
        out.facts.push(fact);
    }
    out.facts.extend(context.iter().cloned());
    out
}
