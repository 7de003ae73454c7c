//! Typed classroom facts.
//!
//! A [`Fact`] is the atomic unit every other layer reasons over: a predicate
//! applied to ordered arguments, an optional value, a time reference, a
//! confidence and the provenance of the detector (or generator) that
//! produced it.

mod abstraction;
mod registry;
mod store;

pub use abstraction::{abstract_observations, Abstraction, CandidateObservation, SkipRecord};
pub use registry::{
    ArgSource, FunctionalKey, ObservationMapping, PredicateAlias, PredicateSpec, SchemaRegistry,
    Substitution,
};
pub use store::{FactStore, StoreError, StorePattern};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest confidence admitted inside a logarithm.
pub const CONFIDENCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactError {
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceRange(f64),
    #[error("interval start {start} after end {end}")]
    InvertedInterval { start: u64, end: u64 },
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("unknown predicate family `{0}`")]
    UnknownFamily(String),
}

/// A confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub const CERTAIN: Confidence = Confidence(1.0);

    pub fn new(value: f64) -> Result<Self, FactError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Confidence(value))
        } else {
            Err(FactError::ConfidenceRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The confidence clamped to `[floor, 1]`, ready for `ln`.
    pub fn for_log(self, floor: f64) -> f64 {
        self.0.clamp(floor, 1.0)
    }
}

impl TryFrom<f64> for Confidence {
    type Error = FactError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Confidence::new(value)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

/// An inclusive tick interval; instants have `start == end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTime")]
pub struct TimeRef {
    start: u64,
    end: u64,
}

#[derive(Deserialize)]
struct RawTime {
    start: u64,
    end: u64,
}

impl TryFrom<RawTime> for TimeRef {
    type Error = FactError;
    fn try_from(raw: RawTime) -> Result<Self, Self::Error> {
        TimeRef::interval(raw.start, raw.end)
    }
}

impl TimeRef {
    /// Time reference spanning the whole episode (used by inert policy facts).
    pub const ALWAYS: TimeRef = TimeRef {
        start: 0,
        end: u64::MAX,
    };

    pub fn instant(t: u64) -> Self {
        TimeRef { start: t, end: t }
    }

    pub fn interval(start: u64, end: u64) -> Result<Self, FactError> {
        if start > end {
            return Err(FactError::InvertedInterval { start, end });
        }
        Ok(TimeRef { start, end })
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn is_instant(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &TimeRef) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, other: &TimeRef) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn hull(&self, other: &TimeRef) -> TimeRef {
        TimeRef {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    /// Widens the interval by `pad` ticks on both sides, saturating.
    pub fn padded(&self, pad: u64) -> TimeRef {
        TimeRef {
            start: self.start.saturating_sub(pad),
            end: self.end.saturating_add(pad),
        }
    }

    /// Continuous-measure intersection over union. Two equal instants score 1.
    pub fn iou(&self, other: &TimeRef) -> f64 {
        let union = (self.end.max(other.end) - self.start.min(other.start)) as f64;
        if union == 0.0 {
            return 1.0;
        }
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if hi < lo {
            return 0.0;
        }
        (hi - lo) as f64 / union
    }
}

impl fmt::Display for TimeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_instant() {
            write!(f, "{}", self.start)
        } else {
            write!(f, "[{},{}]", self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
    Language,
    Metadata,
    Derived,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Video,
        Modality::Audio,
        Modality::Language,
        Modality::Metadata,
        Modality::Derived,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
            Modality::Language => "language",
            Modality::Metadata => "metadata",
            Modality::Derived => "derived",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = FactError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| FactError::UnknownModality(s.to_string()))
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_ref: Option<String>,
}

impl Provenance {
    pub fn new(source: impl Into<String>, modality: Modality) -> Self {
        Provenance {
            source: source.into(),
            modality,
            raw_ref: None,
        }
    }

    pub fn with_raw_ref(mut self, raw_ref: impl Into<String>) -> Self {
        self.raw_ref = Some(raw_ref.into());
        self
    }
}

/// The five predicate families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "OBS")]
    Obs,
    #[serde(rename = "EVENT")]
    Event,
    #[serde(rename = "REL")]
    Rel,
    #[serde(rename = "CONTEXT")]
    Context,
    #[serde(rename = "POLICY")]
    Policy,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Obs,
        Family::Event,
        Family::Rel,
        Family::Context,
        Family::Policy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Obs => "OBS",
            Family::Event => "EVENT",
            Family::Rel => "REL",
            Family::Context => "CONTEXT",
            Family::Policy => "POLICY",
        }
    }

    /// Whether facts of this family carry a value slot after their arguments.
    pub fn has_value(self) -> bool {
        matches!(self, Family::Obs | Family::Context)
    }
}

impl std::str::FromStr for Family {
    type Err = FactError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FactError::UnknownFamily(s.to_string()))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fact value: a symbol or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Symbol(String),
}

impl Value {
    pub fn symbol(s: impl Into<String>) -> Self {
        Value::Symbol(s.into())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Value::Symbol(s) => Some(s),
            Value::Number(_) => None,
        }
    }

    /// Text used as an index key and in grouping; numbers use their shortest form.
    pub fn key(&self) -> String {
        match self {
            Value::Symbol(s) => s.clone(),
            Value::Number(n) => format!("{n}"),
        }
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Symbol(s) => f.write_str(s),
            Value::Number(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(pub String);

impl FactId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FactId {
    fn from(s: &str) -> Self {
        FactId(s.to_string())
    }
}

/// A typed symbolic fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub id: FactId,
    pub predicate: String,
    pub family: Family,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    pub time: TimeRef,
    pub conf: Confidence,
    pub prov: Provenance,
}

impl Fact {
    /// Value-carrying families expose their value as the trailing field.
    pub fn fields(&self) -> Vec<Value> {
        let mut out: Vec<Value> = self.args.iter().map(|a| Value::Symbol(a.clone())).collect();
        if let Some(v) = &self.value {
            out.push(v.clone());
        }
        out
    }

    pub fn field_count(&self) -> usize {
        self.args.len() + usize::from(self.value.is_some())
    }

    pub fn field(&self, index: usize) -> Option<Value> {
        if index < self.args.len() {
            Some(Value::Symbol(self.args[index].clone()))
        } else if index == self.args.len() {
            self.value.clone()
        } else {
            None
        }
    }

    pub fn mentions(&self, entity: &str) -> bool {
        self.args.iter().any(|a| a == entity)
    }

    /// Deterministic content identifier: a digest of everything but the id.
    pub fn content_id(&self) -> FactId {
        let mut hasher = Sha256::new();
        hasher.update(self.predicate.as_bytes());
        hasher.update([0]);
        hasher.update(self.family.as_str().as_bytes());
        for a in &self.args {
            hasher.update([1]);
            hasher.update(a.as_bytes());
        }
        match &self.value {
            Some(Value::Symbol(s)) => {
                hasher.update([2]);
                hasher.update(s.as_bytes());
            }
            Some(Value::Number(n)) => {
                hasher.update([3]);
                hasher.update(n.to_bits().to_le_bytes());
            }
            None => hasher.update([4]),
        }
        hasher.update(self.time.start.to_le_bytes());
        hasher.update(self.time.end.to_le_bytes());
        hasher.update(self.conf.value().to_bits().to_le_bytes());
        hasher.update(self.prov.source.as_bytes());
        hasher.update([5]);
        hasher.update(self.prov.modality.as_str().as_bytes());
        if let Some(r) = &self.prov.raw_ref {
            hasher.update([6]);
            hasher.update(r.as_bytes());
        }
        let digest = hasher.finalize();
        FactId(format!("f{}", hex::encode(&digest[..6])))
    }
}

/// Hands out content ids, suffixing repeats so ids stay unique within one batch.
#[derive(Debug, Default)]
pub struct IdAllocator {
    seen: std::collections::HashMap<FactId, u32>,
}

impl IdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reserve(&mut self, id: &FactId) {
        *self.seen.entry(id.clone()).or_insert(0) += 1;
    }

    pub fn assign(&mut self, fact: &Fact) -> FactId {
        let base = fact.content_id();
        let n = self.seen.entry(base.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            let id = FactId(format!("{}-{}", base.0, n));
            self.seen.insert(id.clone(), 1);
            id
        }
    }
}

/// One failed constraint reported by [`validate_fact`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnregisteredPredicate {
        predicate: String,
    },
    FamilyMismatch {
        predicate: String,
        expected: Family,
        found: Family,
    },
    Arity {
        predicate: String,
        expected: usize,
        found: usize,
    },
    MissingValue {
        predicate: String,
    },
    UnexpectedValue {
        predicate: String,
    },
    ContextConfidence {
        conf: String,
    },
    EmptySource,
    EmptyArgument {
        position: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnregisteredPredicate { predicate } => {
                write!(f, "unregistered predicate `{predicate}`")
            }
            Violation::FamilyMismatch {
                predicate,
                expected,
                found,
            } => write!(
                f,
                "`{predicate}` belongs to family {expected}, fact says {found}"
            ),
            Violation::Arity {
                predicate,
                expected,
                found,
            } => write!(f, "`{predicate}` takes {expected} arguments, found {found}"),
            Violation::MissingValue { predicate } => write!(f, "`{predicate}` requires a value"),
            Violation::UnexpectedValue { predicate } => {
                write!(f, "`{predicate}` does not take a value")
            }
            Violation::ContextConfidence { conf } => {
                write!(f, "CONTEXT facts must have confidence 1.0, found {conf}")
            }
            Violation::EmptySource => f.write_str("provenance source is empty"),
            Violation::EmptyArgument { position } => write!(f, "argument {position} is empty"),
        }
    }
}

/// Checks a fact against its registry entry. An empty vector means the fact is valid.
pub fn validate_fact(fact: &Fact, registry: &SchemaRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    match registry.spec(&fact.predicate) {
        None => out.push(Violation::UnregisteredPredicate {
            predicate: fact.predicate.clone(),
        }),
        Some(spec) => {
            if spec.family != fact.family {
                out.push(Violation::FamilyMismatch {
                    predicate: fact.predicate.clone(),
                    expected: spec.family,
                    found: fact.family,
                });
            }
            if spec.arity() != fact.args.len() {
                out.push(Violation::Arity {
                    predicate: fact.predicate.clone(),
                    expected: spec.arity(),
                    found: fact.args.len(),
                });
            }
            match (spec.family.has_value(), fact.value.is_some()) {
                (true, false) => out.push(Violation::MissingValue {
                    predicate: fact.predicate.clone(),
                }),
                (false, true) => out.push(Violation::UnexpectedValue {
                    predicate: fact.predicate.clone(),
                }),
                _ => {}
            }
        }
    }
    if fact.family == Family::Context && fact.conf.value() != 1.0 {
        out.push(Violation::ContextConfidence {
            conf: fact.conf.value().to_string(),
        });
    }
    if fact.prov.source.is_empty() {
        out.push(Violation::EmptySource);
    }
    for (position, a) in fact.args.iter().enumerate() {
        if a.is_empty() {
            out.push(Violation::EmptyArgument { position });
        }
    }
    out
}

/// True iff both facts fall under one functional key, agree on its key
/// arguments, overlap in time and disagree on value.
pub fn facts_conflict(a: &Fact, b: &Fact, registry: &SchemaRegistry) -> bool {
    if a.value == b.value {
        return false;
    }
    let pa = registry.canonical(&a.predicate);
    let pb = registry.canonical(&b.predicate);
    if pa != pb || !a.time.overlaps(&b.time) {
        return false;
    }
    registry
        .functional_keys()
        .iter()
        .filter(|k| k.predicate == pa)
        .any(|k| k.selects(a) && k.selects(b) && k.key_of(a) == k.key_of(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(target: &str, t: u64, conf: f64) -> Fact {
        let mut f = Fact {
            id: FactId::from("x"),
            predicate: "OBS".into(),
            family: Family::Obs,
            args: vec!["student_4".into(), "gaze_target".into()],
            value: Some(Value::symbol(target)),
            time: TimeRef::instant(t),
            conf: Confidence::new(conf).unwrap(),
            prov: Provenance::new("gaze_net", Modality::Video),
        };
        f.id = f.content_id();
        f
    }

    #[test]
    fn table_obs_row_validates() {
        let reg = SchemaRegistry::default_classroom();
        assert!(validate_fact(&obs("worksheet", 241, 0.81), &reg).is_empty());
    }

    #[test]
    fn event_arity_violation() {
        let reg = SchemaRegistry::default_classroom();
        let f = Fact {
            id: FactId::from("e"),
            predicate: "EVENT".into(),
            family: Family::Event,
            args: vec!["teacher".into(), "open_question".into()],
            value: None,
            time: TimeRef::interval(235, 238).unwrap(),
            conf: Confidence::new(0.96).unwrap(),
            prov: Provenance::new("asr", Modality::Language),
        };
        let v = validate_fact(&f, &reg);
        assert_eq!(
            v,
            vec![Violation::Arity {
                predicate: "EVENT".into(),
                expected: 3,
                found: 2
            }]
        );
    }

    #[test]
    fn context_confidence_must_be_one() {
        let reg = SchemaRegistry::default_classroom();
        let f = Fact {
            id: FactId::from("c"),
            predicate: "CONTEXT".into(),
            family: Family::Context,
            args: vec!["activity".into()],
            value: Some(Value::symbol("small_group_proof")),
            time: TimeRef::interval(220, 310).unwrap(),
            conf: Confidence::new(0.7).unwrap(),
            prov: Provenance::new("lesson_plan", Modality::Metadata),
        };
        let v = validate_fact(&f, &reg);
        assert!(matches!(
            v.as_slice(),
            [Violation::ContextConfidence { .. }]
        ));
    }

    #[test]
    fn unknown_predicate_is_reported() {
        let reg = SchemaRegistry::default_classroom();
        let mut f = obs("worksheet", 1, 0.5);
        f.predicate = "FOO".into();
        let v = validate_fact(&f, &reg);
        assert_eq!(
            v,
            vec![Violation::UnregisteredPredicate {
                predicate: "FOO".into()
            }]
        );
    }

    #[test]
    fn conflicting_gaze_targets() {
        let reg = SchemaRegistry::default_classroom();
        let a = obs("worksheet", 129, 0.8);
        let b = obs("teacher", 129, 0.6);
        assert!(facts_conflict(&a, &b, &reg));
        assert!(facts_conflict(&b, &a, &reg));
        assert!(!facts_conflict(&a, &a, &reg));
    }

    #[test]
    fn disjoint_times_do_not_conflict() {
        let reg = SchemaRegistry::default_classroom();
        let mut a = obs("worksheet", 0, 0.8);
        let mut b = obs("teacher", 0, 0.8);
        a.time = TimeRef::interval(10, 20).unwrap();
        b.time = TimeRef::interval(30, 40).unwrap();
        assert!(!facts_conflict(&a, &b, &reg));
    }

    #[test]
    fn non_functional_attributes_never_conflict() {
        let reg = SchemaRegistry::default_classroom();
        let mut a = obs("worksheet", 5, 0.8);
        let mut b = obs("teacher", 5, 0.8);
        a.args[1] = "posture".into();
        b.args[1] = "posture".into();
        assert!(!facts_conflict(&a, &b, &reg));
    }

    #[test]
    fn iou_examples() {
        let a = TimeRef::interval(0, 10).unwrap();
        let b = TimeRef::interval(6, 16).unwrap();
        assert!((a.iou(&b) - 0.25).abs() < 1e-12);
        assert_eq!(TimeRef::instant(4).iou(&TimeRef::instant(4)), 1.0);
        assert_eq!(TimeRef::instant(4).iou(&TimeRef::instant(5)), 0.0);
    }

    #[test]
    fn confidence_bounds() {
        assert!(Confidence::new(1.2).is_err());
        assert!(Confidence::new(-0.1).is_err());
        assert!(Confidence::new(f64::NAN).is_err());
        assert_eq!(
            Confidence::new(0.0).unwrap().for_log(CONFIDENCE_FLOOR),
            1e-6
        );
    }

    #[test]
    fn allocator_suffixes_duplicates() {
        let f = obs("worksheet", 3, 0.5);
        let mut ids = IdAllocator::new();
        let a = ids.assign(&f);
        let b = ids.assign(&f);
        assert_ne!(a, b);
        assert!(b.as_str().starts_with(a.as_str()));
    }
}
