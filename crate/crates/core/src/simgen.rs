//! Seeded synthetic classroom episodes.
//!
//! A script places construct episodes (confusion, participation opportunity,
//! collaboration) into non-overlapping slots inside each activity segment and
//! fills the remaining time with distractors. Every scripted episode emits
//! exactly the fact pattern its bundled rule looks for. Clean facts are then
//! turned back into candidate observations and passed through a per-modality
//! noise model.
//!
//! The shipped rates are illustrative; there are no published base rates for
//! these constructs.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fact::{
    abstract_observations, CandidateObservation, Confidence, Fact, FactId, Family, IdAllocator,
    Modality, Provenance, SchemaRegistry, TimeRef, Value,
};

pub const CONFUSION_SLOT: u64 = 40;
pub const PARTICIPATION_SLOT: u64 = 30;
pub const COLLABORATION_SLOT: u64 = 40;
const SOURCE: &str = "sim";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("segment {index} ({activity}, [{start},{end}]) needs {needed} ticks for its episodes but has {available}")]
    Infeasible {
        index: usize,
        activity: String,
        start: u64,
        end: u64,
        needed: u64,
        available: u64,
    },
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> SimError {
    SimError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceModel {
    Calibrated,
    Overconfident(f64),
    Underconfident(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub miss_rate: f64,
    #[serde(default)]
    pub substitution_rate: f64,
    #[serde(default = "NoiseModel::default_confidence")]
    pub confidence: ConfidenceModel,
    /// Concentration of the confidence distribution; larger means confidences
    /// cluster closer to `1 - substitution_rate`.
    #[serde(default = "NoiseModel::default_kappa")]
    pub kappa: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::clean()
    }
}

impl NoiseModel {
    fn default_confidence() -> ConfidenceModel {
        ConfidenceModel::Calibrated
    }

    fn default_kappa() -> f64 {
        8.0
    }

    pub fn clean() -> Self {
        NoiseModel {
            miss_rate: 0.0,
            substitution_rate: 0.0,
            confidence: ConfidenceModel::Calibrated,
            kappa: 8.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), SimError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.miss_rate) {
            return Err(bad(format!("{field}.miss_rate"), "must lie in [0, 1]"));
        }
        if !unit(self.substitution_rate) {
            return Err(bad(
                format!("{field}.substitution_rate"),
                "must lie in [0, 1]",
            ));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(bad(format!("{field}.kappa"), "must be positive"));
        }
        match self.confidence {
            ConfidenceModel::Overconfident(d) | ConfidenceModel::Underconfident(d)
                if !(0.0..=0.5).contains(&d) =>
            {
                Err(bad(
                    format!("{field}.confidence"),
                    "offset must lie in [0, 0.5]",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Draws a confidence `c` whose mean is `1 - substitution_rate`; the
    /// observation is then correct with probability exactly `c`.
    fn draw_true_conf(&self, rng: &mut impl Rng) -> f64 {
        let s = self.substitution_rate;
        if s <= 0.0 {
            return 1.0;
        }
        if s >= 1.0 {
            return 0.0;
        }
        Beta::new(self.kappa * (1.0 - s), self.kappa * s)
            .expect("parameters are positive")
            .sample(rng)
    }

    fn report(&self, c: f64) -> f64 {
        match self.confidence {
            ConfidenceModel::Calibrated => c,
            ConfidenceModel::Overconfident(d) => (c + d).min(1.0),
            ConfidenceModel::Underconfident(d) => (c - d).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: u64,
    pub end: u64,
    pub activity: String,
    /// Episodes per segment; the fractional part is a Bernoulli chance of one more.
    #[serde(default)]
    pub confusion: f64,
    #[serde(default)]
    pub participation: f64,
    #[serde(default)]
    pub collaboration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_groups: usize,
    /// Last tick of the episode; segments tile `[0, duration]`.
    pub duration: u64,
    pub timeline: Vec<Segment>,
    /// Distractor facts per tick of free time.
    #[serde(default)]
    pub distractor_rate: f64,
    #[serde(default)]
    pub noise: BTreeMap<Modality, NoiseModel>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| bad("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One segment with the given activity covering the whole episode.
    pub fn single_segment(seed: u64, n_students: usize, duration: u64, activity: &str) -> Self {
        SimConfig {
            seed,
            n_students,
            n_groups: 1,
            duration,
            timeline: vec![Segment {
                start: 0,
                end: duration,
                activity: activity.to_string(),
                confusion: 0.0,
                participation: 0.0,
                collaboration: 0.0,
            }],
            distractor_rate: 0.0,
            noise: BTreeMap::new(),
        }
    }

    pub fn noise_for(&self, m: Modality) -> NoiseModel {
        self.noise.get(&m).copied().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_students == 0 {
            return Err(bad("n_students", "must be at least 1"));
        }
        if self.n_groups == 0 {
            return Err(bad("n_groups", "must be at least 1"));
        }
        if self.n_groups > self.n_students {
            return Err(bad("n_groups", "cannot exceed n_students"));
        }
        if self.timeline.is_empty() {
            return Err(bad("timeline", "needs at least one segment"));
        }
        let mut next = 0u64;
        for (i, s) in self.timeline.iter().enumerate() {
            if s.start != next || s.end < s.start {
                return Err(bad(
                    format!("timeline[{i}]"),
                    format!("expected a segment starting at {next}"),
                ));
            }
            for (name, r) in [
                ("confusion", s.confusion),
                ("participation", s.participation),
                ("collaboration", s.collaboration),
            ] {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(bad(
                        format!("timeline[{i}].{name}"),
                        "rate must be non-negative",
                    ));
                }
            }
            next = s.end + 1;
        }
        if next != self.duration + 1 {
            return Err(bad(
                "timeline",
                format!(
                    "segments end at {} but duration is {}",
                    next - 1,
                    self.duration
                ),
            ));
        }
        if !(self.distractor_rate >= 0.0 && self.distractor_rate <= 1.0) {
            return Err(bad("distractor_rate", "must lie in [0, 1]"));
        }
        for (m, n) in &self.noise {
            n.validate(&format!("noise.{m}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub construct: String,
    pub bindings: BTreeMap<String, String>,
    pub time: TimeRef,
    /// First tick at which the construct is observable.
    pub onset: u64,
}

impl Label {
    /// Bound entities joined in variable order.
    pub fn entity(&self) -> String {
        self.bindings
            .values()
            .cloned()
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub facts: Vec<Fact>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub gt: GroundTruth,
    pub observations: Vec<CandidateObservation>,
}

impl Episode {
    pub fn context(&self) -> Vec<Fact> {
        self.gt
            .facts
            .iter()
            .filter(|f| f.family == Family::Context)
            .cloned()
            .collect()
    }

    /// Observations abstracted into facts, context appended.
    pub fn observed_facts(&self, registry: &SchemaRegistry) -> Vec<Fact> {
        abstract_observations(&self.observations, &self.context(), registry).facts
    }
}

fn student(i: usize) -> String {
    format!("student_{}", i + 1)
}

fn group(i: usize) -> String {
    format!("group_{}", i + 1)
}

fn group_of(student_index: usize, n_groups: usize) -> usize {
    student_index % n_groups
}

struct Script<'a> {
    cfg: &'a SimConfig,
    facts: Vec<Fact>,
    labels: Vec<Label>,
}

impl Script<'_> {
    fn emit(
        &mut self,
        predicate: &str,
        family: Family,
        args: &[&str],
        value: Option<&str>,
        time: TimeRef,
        modality: Modality,
    ) {
        self.facts.push(Fact {
            id: FactId(String::new()),
            predicate: predicate.to_string(),
            family,
            args: args.iter().map(|a| a.to_string()).collect(),
            value: value.map(Value::symbol),
            time,
            conf: Confidence::CERTAIN,
            prov: Provenance::new(SOURCE, modality),
        });
    }

    fn span(a: u64, b: u64) -> TimeRef {
        TimeRef::interval(a, b).expect("scripted intervals are ordered")
    }

    fn label(&mut self, construct: &str, bindings: &[(&str, &str)], time: TimeRef, onset: u64) {
        self.labels.push(Label {
            construct: construct.to_string(),
            bindings: bindings
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            time,
            onset,
        });
    }

    fn confusion(&mut self, o: u64, rng: &mut impl Rng) {
        let s = student(rng.random_range(0..self.cfg.n_students));
        self.emit(
            "EVENT",
            Family::Event,
            &["teacher", "open_question", "class"],
            None,
            Self::span(o + 1, o + 3),
            Modality::Language,
        );
        self.emit(
            "EVENT",
            Family::Event,
            &[&s, "failed_attempt", "proof_step"],
            None,
            Self::span(o + 5, o + 8),
            Modality::Video,
        );
        self.emit(
            "UTTER",
            Family::Event,
            &[&s, "help_request", "step_clarification"],
            None,
            Self::span(o + 10, o + 12),
            Modality::Language,
        );
        self.emit(
            "OBS",
            Family::Obs,
            &[&s, "gaze_target"],
            Some("worksheet"),
            TimeRef::instant(o + 11),
            Modality::Video,
        );
        self.label(
            "confusion_candidate",
            &[("S", &s)],
            Self::span(o + 1, o + 12),
            o + 5,
        );
    }

    fn participation(&mut self, o: u64, rng: &mut impl Rng) {
        let n = self.cfg.n_students;
        let k = rng.random_range(1..=n.min(3));
        let mut oriented: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
        oriented.sort_unstable();
        self.emit(
            "EVENT",
            Family::Event,
            &["teacher", "open_floor", "class"],
            None,
            Self::span(o + 1, o + 6),
            Modality::Language,
        );
        for &i in &oriented {
            self.emit(
                "REL",
                Family::Rel,
                &[&student(i), "oriented_to", "teacher"],
                None,
                Self::span(o, o + 8),
                Modality::Video,
            );
        }
        let roll: f64 = rng.random();
        let mut speaker = None;
        if roll < 0.15 {
            // crosstalk: the floor was never really open
            let who = student(rng.random_range(0..n));
            self.emit(
                "EVENT",
                Family::Event,
                &[&who, "overlapping_speech", "class"],
                None,
                Self::span(o + 4, o + 5),
                Modality::Audio,
            );
            return;
        } else if roll < 0.45 {
            let i = *oriented.choose(rng).expect("at least one oriented student");
            self.emit(
                "EVENT",
                Family::Event,
                &[&student(i), "speak_turn", "class"],
                None,
                Self::span(o + 3, o + 4),
                Modality::Audio,
            );
            speaker = Some(i);
        }
        for &i in oriented.iter().filter(|&&i| Some(i) != speaker) {
            self.label(
                "participation_opportunity",
                &[("S", &student(i))],
                Self::span(o, o + 8),
                o + 1,
            );
        }
    }

    fn collaboration(&mut self, o: u64, rng: &mut impl Rng) {
        let cfg = self.cfg;
        let eligible: Vec<usize> = (0..cfg.n_groups)
            .filter(|&g| {
                (0..cfg.n_students)
                    .filter(|&s| group_of(s, cfg.n_groups) == g)
                    .count()
                    >= 2
            })
            .collect();
        let g = *eligible.choose(rng).expect("feasibility was checked");
        let members: Vec<usize> = (0..cfg.n_students)
            .filter(|&s| group_of(s, cfg.n_groups) == g)
            .collect();
        let pair: Vec<usize> = members.choose_multiple(rng, 2).copied().collect();
        let (a, b) = (student(pair[0]), student(pair[1]));
        let gname = group(g);
        self.emit(
            "REL",
            Family::Rel,
            &[&a, "mutual_orientation", &b],
            None,
            Self::span(o + 2, o + 30),
            Modality::Video,
        );
        self.emit(
            "EVENT",
            Family::Event,
            &[&a, "speak_turn", &gname],
            None,
            Self::span(o + 5, o + 9),
            Modality::Audio,
        );
        self.emit(
            "EVENT",
            Family::Event,
            &[&b, "speak_turn", &gname],
            None,
            Self::span(o + 12, o + 16),
            Modality::Audio,
        );
        self.label(
            "collaboration_episode",
            &[("A", &a), ("B", &b)],
            Self::span(o + 2, o + 30),
            o + 2,
        );
    }

    fn distractor(&mut self, t: u64, rng: &mut impl Rng, gaze_used: &mut HashSet<(usize, u64)>) {
        let i = rng.random_range(0..self.cfg.n_students);
        let s = student(i);
        match rng.random_range(0..3) {
            0 => {
                if !gaze_used.insert((i, t)) {
                    return;
                }
                const TARGETS: [&str; 5] = ["teacher", "board", "peer", "window", "notebook"];
                let target = TARGETS.choose(rng).expect("non-empty");
                self.emit(
                    "OBS",
                    Family::Obs,
                    &[&s, "gaze_target"],
                    Some(target),
                    TimeRef::instant(t),
                    Modality::Video,
                );
            }
            1 => self.emit(
                "EVENT",
                Family::Event,
                &[&s, "write_note", "notebook"],
                None,
                Self::span(t, t + 1),
                Modality::Video,
            ),
            _ => self.emit(
                "EVENT",
                Family::Event,
                &[&s, "raise_hand", "class"],
                None,
                Self::span(t, t + 1),
                Modality::Video,
            ),
        }
    }
}

fn episode_count(rate: f64, rng: &mut impl Rng) -> usize {
    let whole = rate.floor();
    let extra = rng.random::<f64>() < rate - whole;
    whole as usize + usize::from(extra)
}

const SCRIPT_STREAM: u64 = 0;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn modality_stream(m: Modality) -> u64 {
    1 + Modality::ALL.iter().position(|x| *x == m).expect("listed") as u64
}

#[derive(Clone, Copy)]
enum Kind {
    Confusion,
    Participation,
    Collaboration,
}

impl Kind {
    fn len(self) -> u64 {
        match self {
            Kind::Confusion => CONFUSION_SLOT,
            Kind::Participation => PARTICIPATION_SLOT,
            Kind::Collaboration => COLLABORATION_SLOT,
        }
    }
}

/// Builds the clean script for a configuration.
pub fn generate_ground_truth(cfg: &SimConfig) -> Result<GroundTruth, SimError> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, SCRIPT_STREAM);
    let mut script = Script {
        cfg,
        facts: Vec::new(),
        labels: Vec::new(),
    };
    for s in 0..cfg.n_students {
        let (name, g) = (student(s), group(group_of(s, cfg.n_groups)));
        script.emit(
            "REL",
            Family::Rel,
            &[&name, "member_of", &g],
            None,
            Script::span(0, cfg.duration),
            Modality::Metadata,
        );
    }
    let can_collaborate = (0..cfg.n_groups).any(|g| {
        (0..cfg.n_students)
            .filter(|&s| group_of(s, cfg.n_groups) == g)
            .count()
            >= 2
    });
    let mut gaze_used = HashSet::new();
    for (index, seg) in cfg.timeline.iter().enumerate() {
        script.emit(
            "CONTEXT",
            Family::Context,
            &["activity"],
            Some(&seg.activity),
            Script::span(seg.start, seg.end),
            Modality::Metadata,
        );
        let mut kinds: Vec<Kind> = Vec::new();
        kinds.extend(std::iter::repeat_n(
            Kind::Confusion,
            episode_count(seg.confusion, &mut rng),
        ));
        kinds.extend(std::iter::repeat_n(
            Kind::Participation,
            episode_count(seg.participation, &mut rng),
        ));
        let collab = episode_count(seg.collaboration, &mut rng);
        if collab > 0 && !can_collaborate {
            return Err(bad(
                format!("timeline[{index}].collaboration"),
                "no group has two members",
            ));
        }
        kinds.extend(std::iter::repeat_n(Kind::Collaboration, collab));
        let needed: u64 = kinds.iter().map(|k| k.len()).sum();
        let available = seg.end - seg.start + 1;
        if needed > available {
            return Err(SimError::Infeasible {
                index,
                activity: seg.activity.clone(),
                start: seg.start,
                end: seg.end,
                needed,
                available,
            });
        }
        kinds.shuffle(&mut rng);
        let free = available - needed;
        let mut gaps: Vec<u64> = (0..kinds.len())
            .map(|_| rng.random_range(0..=free))
            .collect();
        gaps.sort_unstable();
        let mut used = 0u64;
        let mut busy: Vec<(u64, u64)> = Vec::with_capacity(kinds.len());
        for (kind, gap) in kinds.iter().zip(gaps) {
            let o = seg.start + gap + used;
            match kind {
                Kind::Confusion => script.confusion(o, &mut rng),
                Kind::Participation => script.participation(o, &mut rng),
                Kind::Collaboration => script.collaboration(o, &mut rng),
            }
            busy.push((o, o + kind.len() - 1));
            used += kind.len();
        }
        let n_distractors = (cfg.distractor_rate * free as f64).round() as usize;
        for _ in 0..n_distractors {
            let t = rng.random_range(seg.start..=seg.end.saturating_sub(1).max(seg.start));
            if busy.iter().any(|&(a, b)| t + 1 >= a && t <= b) {
                continue;
            }
            script.distractor(t, &mut rng, &mut gaze_used);
        }
    }
    let mut facts = script.facts;
    facts.sort_by(|a, b| {
        (
            a.time.start(),
            a.time.end(),
            &a.predicate,
            &a.args,
            a.value.as_ref().map(Value::key),
        )
            .cmp(&(
                b.time.start(),
                b.time.end(),
                &b.predicate,
                &b.args,
                b.value.as_ref().map(Value::key),
            ))
    });
    let mut ids = IdAllocator::new();
    for (n, f) in facts.iter_mut().enumerate() {
        f.id = ids.assign(f);
        if f.family != Family::Context {
            f.prov.raw_ref = Some(format!("{}/{:06}", f.prov.modality, n));
        }
    }
    let mut labels = script.labels;
    labels.sort_by(|a, b| {
        (a.time, &a.construct, &a.bindings).cmp(&(b.time, &b.construct, &b.bindings))
    });
    Ok(GroundTruth { facts, labels })
}

/// Passes one clean fact through a noise model. Returns `None` when the
/// observation is dropped or the fact has no observation mapping.
pub fn corrupt(
    fact: &Fact,
    noise: &NoiseModel,
    registry: &SchemaRegistry,
    rng: &mut impl Rng,
) -> Option<CandidateObservation> {
    let (mapping, entities, mut payload) = registry.invert(fact)?;
    if rng.random::<f64>() < noise.miss_rate {
        return None;
    }
    let substitutable = mapping.substitution.as_ref().and_then(|sub| {
        let domain = registry.domain(&sub.domain)?;
        let current = payload.get(&sub.payload_key)?.key();
        let others: Vec<&String> = domain.iter().filter(|d| **d != current).collect();
        (!others.is_empty()).then_some((sub.payload_key.clone(), others))
    });
    let c = match &substitutable {
        Some(_) => noise.draw_true_conf(rng),
        None => 1.0,
    };
    if let Some((key, others)) = substitutable {
        if rng.random::<f64>() >= c {
            let pick = others.choose(rng).expect("non-empty");
            payload.insert(key, Value::symbol(pick.as_str()));
        }
    }
    let reported = noise.report(c).clamp(0.0, 1.0);
    Some(CandidateObservation {
        kind: mapping.kind.clone(),
        entities,
        time: fact.time,
        conf: Confidence::new(reported).expect("clamped into range"),
        prov: fact.prov.clone(),
        payload,
    })
}

/// Generates the clean script and its noisy observation stream.
pub fn generate_episode(cfg: &SimConfig, registry: &SchemaRegistry) -> Result<Episode, SimError> {
    let gt = generate_ground_truth(cfg)?;
    let mut rngs: BTreeMap<Modality, ChaCha8Rng> = Modality::ALL
        .iter()
        .map(|&m| (m, stream(cfg.seed, modality_stream(m))))
        .collect();
    let mut observations = Vec::new();
    for f in gt.facts.iter().filter(|f| f.family != Family::Context) {
        let m = f.prov.modality;
        let rng = rngs.get_mut(&m).expect("every modality has a stream");
        if let Some(o) = corrupt(f, &cfg.noise_for(m), registry, rng) {
            observations.push(o);
        }
    }
    Ok(Episode { gt, observations })
}

/// Draws `n` independent calibrated confidences and correctness bits, without
/// any classroom structure. Handy for checking the noise model in isolation.
pub fn sample_confidences(
    noise: &NoiseModel,
    n: usize,
    rng: &mut impl RngCore,
) -> Vec<(f64, bool)> {
    (0..n)
        .map(|_| {
            let c = noise.draw_true_conf(rng);
            let correct = rng.random::<f64>() < c;
            (noise.report(c), correct)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::serialize_facts;

    fn reg() -> SchemaRegistry {
        SchemaRegistry::default_classroom()
    }

    fn one_confusion(seed: u64) -> SimConfig {
        let mut cfg = SimConfig::single_segment(seed, 1, 199, "guided_proof");
        cfg.timeline[0].confusion = 1.0;
        cfg
    }

    #[test]
    fn zero_noise_confusion_has_the_listing_shape() {
        let ep = generate_episode(&one_confusion(42), &reg()).unwrap();
        let obs = ep.observed_facts(&reg());
        let heads: Vec<(String, Vec<String>)> = obs
            .iter()
            .filter(|f| f.family != Family::Rel)
            .map(|f| {
                (
                    f.predicate.clone(),
                    f.fields().iter().map(Value::key).collect(),
                )
            })
            .collect();
        let expect = |p: &str, f: &[&str]| {
            (
                p.to_string(),
                f.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(
            heads,
            vec![
                expect("EVENT", &["teacher", "open_question", "class"]),
                expect("EVENT", &["student_1", "failed_attempt", "proof_step"]),
                expect(
                    "UTTER",
                    &["student_1", "help_request", "step_clarification"]
                ),
                expect("OBS", &["student_1", "gaze_target", "worksheet"]),
                expect("CONTEXT", &["activity", "guided_proof"]),
            ]
        );
        assert_eq!(ep.gt.labels.len(), 1);
    }

    #[test]
    fn full_miss_rate_drops_everything() {
        let mut cfg = one_confusion(1);
        for m in Modality::ALL {
            cfg.noise.insert(
                m,
                NoiseModel {
                    miss_rate: 1.0,
                    ..NoiseModel::clean()
                },
            );
        }
        let ep = generate_episode(&cfg, &reg()).unwrap();
        assert!(ep.observations.is_empty());
        assert_eq!(ep.gt, generate_ground_truth(&one_confusion(1)).unwrap());
    }

    #[test]
    fn same_seed_same_episode() {
        let mut cfg = one_confusion(9);
        cfg.distractor_rate = 0.1;
        cfg.noise.insert(
            Modality::Video,
            NoiseModel {
                miss_rate: 0.2,
                substitution_rate: 0.3,
                ..NoiseModel::clean()
            },
        );
        let a = generate_episode(&cfg, &reg()).unwrap();
        let b = generate_episode(&cfg, &reg()).unwrap();
        assert_eq!(
            serialize_facts(&a.observed_facts(&reg()), &reg()),
            serialize_facts(&b.observed_facts(&reg()), &reg())
        );
        assert_eq!(a.gt, b.gt);
    }

    #[test]
    fn too_many_episodes_are_infeasible() {
        let mut cfg = one_confusion(1);
        cfg.timeline[0].confusion = 6.0;
        assert!(matches!(
            generate_ground_truth(&cfg),
            Err(SimError::Infeasible { index: 0, .. })
        ));
    }

    #[test]
    fn timeline_must_tile() {
        let mut cfg = one_confusion(1);
        cfg.timeline[0].end = 150;
        assert!(matches!(cfg.validate(), Err(SimError::Config { .. })));
    }

    #[test]
    fn substitution_always_changes_the_value() {
        let noise = NoiseModel {
            substitution_rate: 1.0,
            ..NoiseModel::clean()
        };
        let gt = generate_ground_truth(&one_confusion(3)).unwrap();
        let gaze = gt.facts.iter().find(|f| f.family == Family::Obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let o = corrupt(gaze, &noise, &reg(), &mut rng).unwrap();
            assert_ne!(o.payload["target"].key(), "worksheet");
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let gt = generate_ground_truth(&one_confusion(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in gt.facts.iter().filter(|f| f.family != Family::Context) {
            let o = corrupt(f, &NoiseModel::clean(), &reg(), &mut rng).unwrap();
            let back = abstract_observations(&[o], &[], &reg()).facts.remove(0);
            assert_eq!(
                (back.fields(), back.time, back.conf, back.prov),
                (f.fields(), f.time, f.conf, f.prov.clone())
            );
        }
    }
}
