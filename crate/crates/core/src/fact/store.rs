use std::collections::HashMap;

use thiserror::Error;

use super::{Fact, FactId, SchemaRegistry, TimeRef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("duplicate fact id `{0}`")]
    DuplicateId(FactId),
}

/// Optional filters for [`FactStore::query`]; every present filter must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorePattern {
    pub predicate: Option<String>,
    pub entity: Option<String>,
    pub window: Option<TimeRef>,
}

impl StorePattern {
    pub fn predicate(p: impl Into<String>) -> Self {
        StorePattern {
            predicate: Some(p.into()),
            ..Default::default()
        }
    }

    pub fn window(w: TimeRef) -> Self {
        StorePattern {
            window: Some(w),
            ..Default::default()
        }
    }
}

/// Append-only fact collection with predicate, entity, field and time indexes.
///
/// Positions are insertion order; every lookup returns positions ascending.
#[derive(Debug, Clone, Default)]
pub struct FactStore {
    facts: Vec<Fact>,
    canonical: Vec<String>,
    by_id: HashMap<FactId, usize>,
    by_predicate: HashMap<String, Vec<usize>>,
    by_entity: HashMap<String, Vec<usize>>,
    by_field: HashMap<(String, usize, String), Vec<usize>>,
    // (start, position) of short facts, kept sorted
    by_start: Vec<(u64, usize)>,
    max_len: u64,
    // facts spanning more than LONG_SPAN ticks, scanned directly
    long: Vec<usize>,
}

/// Facts longer than this (whole-lesson context, memberships) are kept out of
/// the start index so they do not widen every window scan.
const LONG_SPAN: u64 = 600;

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_facts(
        facts: impl IntoIterator<Item = Fact>,
        registry: &SchemaRegistry,
    ) -> Result<Self, StoreError> {
        let mut store = FactStore::new();
        for f in facts {
            store.insert(f, registry)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, fact: Fact, registry: &SchemaRegistry) -> Result<usize, StoreError> {
        if self.by_id.contains_key(&fact.id) {
            return Err(StoreError::DuplicateId(fact.id));
        }
        let pos = self.facts.len();
        let canonical = registry.canonical(&fact.predicate).to_string();
        self.by_id.insert(fact.id.clone(), pos);
        self.by_predicate
            .entry(canonical.clone())
            .or_default()
            .push(pos);
        let mut seen: Vec<&str> = Vec::new();
        for a in &fact.args {
            if !seen.contains(&a.as_str()) {
                seen.push(a);
                self.by_entity.entry(a.clone()).or_default().push(pos);
            }
        }
        for (i, v) in fact.fields().into_iter().enumerate() {
            self.by_field
                .entry((canonical.clone(), i, v.key()))
                .or_default()
                .push(pos);
        }
        let len = fact.time.end() - fact.time.start();
        if len > LONG_SPAN {
            self.long.push(pos);
        } else {
            let at = self
                .by_start
                .partition_point(|&(s, p)| (s, p) <= (fact.time.start(), pos));
            self.by_start.insert(at, (fact.time.start(), pos));
            self.max_len = self.max_len.max(len);
        }
        self.canonical.push(canonical);
        self.facts.push(fact);
        Ok(pos)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn get(&self, pos: usize) -> &Fact {
        &self.facts[pos]
    }

    pub fn canonical_predicate(&self, pos: usize) -> &str {
        &self.canonical[pos]
    }

    pub fn position(&self, id: &FactId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn by_id(&self, id: &FactId) -> Option<&Fact> {
        self.position(id).map(|p| &self.facts[p])
    }

    pub fn with_predicate(&self, canonical: &str) -> &[usize] {
        self.by_predicate.get(canonical).map_or(&[], Vec::as_slice)
    }

    pub fn with_entity(&self, entity: &str) -> &[usize] {
        self.by_entity.get(entity).map_or(&[], Vec::as_slice)
    }

    /// Positions of facts of `canonical` whose field `index` has key `key`.
    pub fn with_field(&self, canonical: &str, index: usize, key: &str) -> &[usize] {
        self.by_field
            .get(&(canonical.to_string(), index, key.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    /// Positions of facts whose interval overlaps `window`, ascending.
    pub fn overlapping(&self, window: &TimeRef) -> Vec<usize> {
        let hi = self.by_start.partition_point(|&(s, _)| s <= window.end());
        let lo_start = window.start().saturating_sub(self.max_len);
        let lo = self.by_start.partition_point(|&(s, _)| s < lo_start);
        let mut out: Vec<usize> = self.by_start[lo..hi]
            .iter()
            .map(|&(_, p)| p)
            .chain(self.long.iter().copied())
            .filter(|&p| self.facts[p].time.overlaps(window))
            .collect();
        out.sort_unstable();
        out
    }

    /// Facts matching every present filter of `pattern`, in insertion order.
    pub fn query(&self, pattern: &StorePattern, registry: &SchemaRegistry) -> Vec<&Fact> {
        let mut lists: Vec<Vec<usize>> = Vec::new();
        if let Some(p) = &pattern.predicate {
            lists.push(self.with_predicate(registry.canonical(p)).to_vec());
        }
        if let Some(e) = &pattern.entity {
            lists.push(self.with_entity(e).to_vec());
        }
        if let Some(w) = &pattern.window {
            lists.push(self.overlapping(w));
        }
        let positions = match lists.len() {
            0 => (0..self.facts.len()).collect(),
            _ => {
                lists.sort_by_key(Vec::len);
                let mut iter = lists.into_iter();
                let mut acc = iter.next().unwrap_or_default();
                for other in iter {
                    acc.retain(|p| other.binary_search(p).is_ok());
                }
                acc
            }
        };
        positions.into_iter().map(|p| &self.facts[p]).collect()
    }

    /// Overall time span covered by the store, if any.
    pub fn span(&self) -> Option<TimeRef> {
        self.facts
            .iter()
            .filter(|f| f.time != TimeRef::ALWAYS)
            .map(|f| f.time)
            .reduce(|a, b| a.hull(&b))
    }
}
