use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Fact, Family, Modality, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("alias `{alias}` targets unregistered predicate `{target}`")]
    DanglingAlias { alias: String, target: String },
    #[error("alias `{0}` shadows a registered predicate")]
    AliasShadows(String),
    #[error("functional key on unregistered predicate `{0}`")]
    UnknownKeyPredicate(String),
    #[error("functional key on `{predicate}` uses field {index} beyond arity {arity}")]
    KeyOutOfRange {
        predicate: String,
        index: usize,
        arity: usize,
    },
    #[error("observation kind `{kind}` maps to unregistered predicate `{predicate}`")]
    UnknownMappingPredicate { kind: String, predicate: String },
    #[error("observation kind `{0}` is mapped twice")]
    DuplicateMapping(String),
    #[error("substitution domain `{0}` is not declared")]
    UnknownDomain(String),
    #[error("invalid registry json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub family: Family,
    /// Names of the argument positions, in order.
    pub roles: Vec<String>,
    /// Extra names resolving to an argument position (e.g. `group` for an event target).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub role_aliases: BTreeMap<String, usize>,
    pub default_modality: Modality,
}

impl PredicateSpec {
    pub fn arity(&self) -> usize {
        self.roles.len()
    }

    /// Field index for a role name; `value` addresses the trailing value slot.
    pub fn role_index(&self, role: &str) -> Option<usize> {
        if let Some(i) = self.roles.iter().position(|r| r == role) {
            return Some(i);
        }
        if let Some(&i) = self.role_aliases.get(role) {
            return Some(i);
        }
        (role == "value" && self.family.has_value()).then_some(self.roles.len())
    }

    pub fn field_count(&self) -> usize {
        self.arity() + usize::from(self.family.has_value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateAlias {
    pub target: String,
    pub modality: Modality,
}

/// Declares that facts of `predicate` whose field `selector.0` equals
/// `selector.1` admit one value per key-argument tuple at any instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalKey {
    pub predicate: String,
    #[serde(default)]
    pub selector: Option<(usize, String)>,
    pub key_args: Vec<usize>,
}

impl FunctionalKey {
    pub fn selects(&self, fact: &Fact) -> bool {
        match &self.selector {
            None => true,
            Some((i, sym)) => fact.args.get(*i).is_some_and(|a| a == sym),
        }
    }

    pub fn key_of<'a>(&self, fact: &'a Fact) -> Vec<Option<&'a str>> {
        self.key_args
            .iter()
            .map(|&i| fact.args.get(i).map(String::as_str))
            .collect()
    }
}

/// Where an abstracted fact field comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgSource {
    Entity(usize),
    Payload(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub payload_key: String,
    pub domain: String,
}

/// How one candidate-observation kind becomes a fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMapping {
    pub kind: String,
    pub predicate: String,
    pub args: Vec<ArgSource>,
    #[serde(default)]
    pub value: Option<ArgSource>,
    /// Which payload entry a noise model may replace, and from which vocabulary.
    #[serde(default)]
    pub substitution: Option<Substitution>,
}

/// Predicate table, functional keys, aliases, value vocabularies and the
/// observation-to-fact mapping table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRegistry")]
pub struct SchemaRegistry {
    predicates: BTreeMap<String, PredicateSpec>,
    #[serde(default)]
    aliases: BTreeMap<String, PredicateAlias>,
    #[serde(default)]
    functional_keys: Vec<FunctionalKey>,
    #[serde(default)]
    domains: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    context_keys: BTreeSet<String>,
    #[serde(default)]
    mappings: Vec<ObservationMapping>,
}

#[derive(Deserialize)]
struct RawRegistry {
    predicates: BTreeMap<String, PredicateSpec>,
    #[serde(default)]
    aliases: BTreeMap<String, PredicateAlias>,
    #[serde(default)]
    functional_keys: Vec<FunctionalKey>,
    #[serde(default)]
    domains: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    context_keys: BTreeSet<String>,
    #[serde(default)]
    mappings: Vec<ObservationMapping>,
}

impl TryFrom<RawRegistry> for SchemaRegistry {
    type Error = RegistryError;
    fn try_from(raw: RawRegistry) -> Result<Self, Self::Error> {
        let reg = SchemaRegistry {
            predicates: raw.predicates,
            aliases: raw.aliases,
            functional_keys: raw.functional_keys,
            domains: raw.domains,
            context_keys: raw.context_keys,
            mappings: raw.mappings,
        };
        reg.check()?;
        Ok(reg)
    }
}

fn spec(family: Family, roles: &[&str], modality: Modality) -> PredicateSpec {
    PredicateSpec {
        family,
        roles: roles.iter().map(|r| r.to_string()).collect(),
        role_aliases: BTreeMap::new(),
        default_modality: modality,
    }
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl SchemaRegistry {
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        serde_json::from_str(text).map_err(|e| RegistryError::Json(e.to_string()))
    }

    /// The classroom schema: the five families, `UTTER` as a language-modality
    /// alias of `EVENT`, functional gaze targets and activities.
    pub fn default_classroom() -> Self {
        let mut predicates = BTreeMap::new();
        predicates.insert(
            "OBS".to_string(),
            spec(Family::Obs, &["entity", "attribute"], Modality::Video),
        );
        let mut event = spec(
            Family::Event,
            &["actor", "action", "target"],
            Modality::Video,
        );
        event.role_aliases.insert("group".into(), 2);
        predicates.insert("EVENT".to_string(), event);
        predicates.insert(
            "REL".to_string(),
            spec(
                Family::Rel,
                &["entity_1", "relation", "entity_2"],
                Modality::Video,
            ),
        );
        predicates.insert(
            "CONTEXT".to_string(),
            spec(Family::Context, &["key"], Modality::Metadata),
        );
        predicates.insert(
            "POLICY".to_string(),
            spec(
                Family::Policy,
                &["id", "condition", "consequence"],
                Modality::Metadata,
            ),
        );

        let mut aliases = BTreeMap::new();
        aliases.insert(
            "UTTER".to_string(),
            PredicateAlias {
                target: "EVENT".into(),
                modality: Modality::Language,
            },
        );

        let functional_keys = vec![
            FunctionalKey {
                predicate: "OBS".into(),
                selector: Some((1, "gaze_target".into())),
                key_args: vec![0, 1],
            },
            FunctionalKey {
                predicate: "CONTEXT".into(),
                selector: Some((0, "activity".into())),
                key_args: vec![0],
            },
        ];

        let mut domains = BTreeMap::new();
        domains.insert(
            "gaze_target".to_string(),
            words(&[
                "worksheet",
                "teacher",
                "board",
                "peer",
                "window",
                "notebook",
            ]),
        );
        domains.insert(
            "event_action".to_string(),
            words(&[
                "open_question",
                "open_floor",
                "failed_attempt",
                "help_request",
                "speak_turn",
                "overlapping_speech",
                "write_note",
                "raise_hand",
                "demonstration",
            ]),
        );
        domains.insert(
            "speech_act".to_string(),
            words(&["help_request", "answer", "comment", "question"]),
        );
        domains.insert(
            "activity".to_string(),
            words(&[
                "guided_proof",
                "small_group_proof",
                "small_group_work",
                "whole_class_discussion",
                "lecture",
                "individual_practice",
            ]),
        );

        let context_keys = ["activity", "phase", "subject", "layout"]
            .iter()
            .map(|s| s.to_string())
            .collect();

        let p = |k: &str| ArgSource::Payload(k.to_string());
        let c = |k: &str| ArgSource::Const(k.to_string());
        let rel = |kind: &str| ObservationMapping {
            kind: kind.into(),
            predicate: "REL".into(),
            args: vec![ArgSource::Entity(0), c(kind), ArgSource::Entity(1)],
            value: None,
            substitution: None,
        };
        let mappings = vec![
            ObservationMapping {
                kind: "gaze".into(),
                predicate: "OBS".into(),
                args: vec![ArgSource::Entity(0), c("gaze_target")],
                value: Some(p("target")),
                substitution: Some(Substitution {
                    payload_key: "target".into(),
                    domain: "gaze_target".into(),
                }),
            },
            ObservationMapping {
                kind: "head_pose".into(),
                predicate: "OBS".into(),
                args: vec![ArgSource::Entity(0), c("head_yaw")],
                value: Some(p("yaw")),
                substitution: None,
            },
            ObservationMapping {
                kind: "utterance".into(),
                predicate: "UTTER".into(),
                args: vec![ArgSource::Entity(0), p("act"), p("topic")],
                value: None,
                substitution: Some(Substitution {
                    payload_key: "act".into(),
                    domain: "speech_act".into(),
                }),
            },
            ObservationMapping {
                kind: "action".into(),
                predicate: "EVENT".into(),
                args: vec![ArgSource::Entity(0), p("action"), p("target")],
                value: None,
                substitution: Some(Substitution {
                    payload_key: "action".into(),
                    domain: "event_action".into(),
                }),
            },
            rel("mutual_orientation"),
            rel("oriented_to"),
            rel("member_of"),
        ];

        let reg = SchemaRegistry {
            predicates,
            aliases,
            functional_keys,
            domains,
            context_keys,
            mappings,
        };
        debug_assert!(reg.check().is_ok());
        reg
    }

    fn check(&self) -> Result<(), RegistryError> {
        for (alias, a) in &self.aliases {
            if self.predicates.contains_key(alias) {
                return Err(RegistryError::AliasShadows(alias.clone()));
            }
            if !self.predicates.contains_key(&a.target) {
                return Err(RegistryError::DanglingAlias {
                    alias: alias.clone(),
                    target: a.target.clone(),
                });
            }
        }
        for k in &self.functional_keys {
            let spec = self
                .predicates
                .get(&k.predicate)
                .ok_or_else(|| RegistryError::UnknownKeyPredicate(k.predicate.clone()))?;
            let sel = k.selector.iter().map(|(i, _)| *i);
            if let Some(index) = k
                .key_args
                .iter()
                .copied()
                .chain(sel)
                .find(|&i| i >= spec.arity())
            {
                return Err(RegistryError::KeyOutOfRange {
                    predicate: k.predicate.clone(),
                    index,
                    arity: spec.arity(),
                });
            }
        }
        let mut kinds = BTreeSet::new();
        for m in &self.mappings {
            if !kinds.insert(m.kind.as_str()) {
                return Err(RegistryError::DuplicateMapping(m.kind.clone()));
            }
            if self.spec(&m.predicate).is_none() {
                return Err(RegistryError::UnknownMappingPredicate {
                    kind: m.kind.clone(),
                    predicate: m.predicate.clone(),
                });
            }
            if let Some(s) = &m.substitution {
                if !self.domains.contains_key(&s.domain) {
                    return Err(RegistryError::UnknownDomain(s.domain.clone()));
                }
            }
        }
        Ok(())
    }

    /// Canonical predicate name: aliases resolve to their target.
    pub fn canonical<'a>(&'a self, predicate: &'a str) -> &'a str {
        match self.aliases.get(predicate) {
            Some(a) => &a.target,
            None => predicate,
        }
    }

    pub fn spec(&self, predicate: &str) -> Option<&PredicateSpec> {
        self.predicates.get(self.canonical(predicate))
    }

    pub fn is_registered(&self, predicate: &str) -> bool {
        self.spec(predicate).is_some()
    }

    /// Modality assumed for a fact of `predicate` that states none.
    pub fn default_modality(&self, predicate: &str) -> Option<Modality> {
        if let Some(a) = self.aliases.get(predicate) {
            return Some(a.modality);
        }
        self.predicates.get(predicate).map(|s| s.default_modality)
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, &PredicateSpec)> {
        self.predicates.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&str, &PredicateAlias)> {
        self.aliases.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn functional_keys(&self) -> &[FunctionalKey] {
        &self.functional_keys
    }

    pub fn domain(&self, name: &str) -> Option<&[String]> {
        self.domains.get(name).map(Vec::as_slice)
    }

    pub fn is_context_key(&self, key: &str) -> bool {
        self.context_keys.contains(key)
    }

    pub fn mapping(&self, kind: &str) -> Option<&ObservationMapping> {
        self.mappings.iter().find(|m| m.kind == kind)
    }

    pub fn mappings(&self) -> &[ObservationMapping] {
        &self.mappings
    }

    /// Finds the mapping that would reproduce `fact` and the entities and
    /// payload it needs. Used to turn clean facts back into observations.
    pub fn invert(
        &self,
        fact: &Fact,
    ) -> Option<(&ObservationMapping, Vec<String>, BTreeMap<String, Value>)> {
        'mapping: for m in &self.mappings {
            if m.predicate != fact.predicate || m.args.len() != fact.args.len() {
                continue;
            }
            if m.value.is_some() != fact.value.is_some() {
                continue;
            }
            let mut entities: BTreeMap<usize, String> = BTreeMap::new();
            let mut payload = BTreeMap::new();
            let slots = m
                .args
                .iter()
                .zip(fact.args.iter().map(|a| Value::Symbol(a.clone())))
                .chain(m.value.iter().zip(fact.value.iter().cloned()));
            for (src, val) in slots {
                match src {
                    ArgSource::Const(c) => {
                        if val.as_symbol() != Some(c.as_str()) {
                            continue 'mapping;
                        }
                    }
                    ArgSource::Entity(i) => {
                        let Value::Symbol(s) = val else {
                            continue 'mapping;
                        };
                        if entities.insert(*i, s.clone()).is_some_and(|prev| prev != s) {
                            continue 'mapping;
                        }
                    }
                    ArgSource::Payload(k) => {
                        payload.insert(k.clone(), val);
                    }
                }
            }
            // entity slots must be dense from 0
            if entities.keys().copied().ne(0..entities.len()) {
                continue;
            }
            return Some((m, entities.into_values().collect(), payload));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_registry_roundtrips_through_json() {
        let reg = SchemaRegistry::default_classroom();
        let text = serde_json::to_string(&reg).unwrap();
        assert_eq!(SchemaRegistry::from_json(&text).unwrap(), reg);
    }

    #[test]
    fn utter_aliases_event() {
        let reg = SchemaRegistry::default_classroom();
        assert_eq!(reg.canonical("UTTER"), "EVENT");
        assert_eq!(reg.spec("UTTER").unwrap().family, Family::Event);
        assert_eq!(reg.default_modality("UTTER"), Some(Modality::Language));
        assert_eq!(reg.default_modality("EVENT"), Some(Modality::Video));
    }

    #[test]
    fn dangling_alias_rejected() {
        let text = r#"{"predicates": {}, "aliases": {"UTTER": {"target": "EVENT", "modality": "language"}}}"#;
        assert!(matches!(
            SchemaRegistry::from_json(text),
            Err(RegistryError::Json(msg)) if msg.contains("unregistered")
        ));
    }

    #[test]
    fn role_lookup() {
        let reg = SchemaRegistry::default_classroom();
        let ev = reg.spec("EVENT").unwrap();
        assert_eq!(ev.role_index("actor"), Some(0));
        assert_eq!(ev.role_index("group"), Some(2));
        assert_eq!(ev.role_index("value"), None);
        assert_eq!(reg.spec("OBS").unwrap().role_index("value"), Some(2));
    }
}
