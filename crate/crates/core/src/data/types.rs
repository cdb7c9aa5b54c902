use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Sequences longer than this keep only their most recent events.
pub const MAX_SEQUENCE_LEN: usize = 200;
/// Students with fewer events are dropped at load time.
pub const MIN_SEQUENCE_LEN: usize = 3;

/// One practice record with dense indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionEvent {
    pub student: u32,
    pub question: u32,
    /// Sorted, de-duplicated, non-empty.
    pub concepts: Vec<u32>,
    pub correct: bool,
    pub order_index: u64,
}

impl InteractionEvent {
    pub fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// A student's chronological practice history.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StudentSequence {
    pub student: u32,
    pub events: Vec<InteractionEvent>,
}

impl StudentSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Bijection between raw identifiers and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    dense: BTreeMap<String, u32>,
}

impl IdMap {
    /// Dense index of `raw`, assigning the next one on first sight.
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&i) = self.dense.get(raw) {
            return i;
        }
        let i = self.raw.len() as u32;
        self.raw.push(raw.into());
        self.dense.insert(raw.into(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.dense.get(raw).copied()
    }

    pub fn raw(&self, dense: u32) -> &str {
        &self.raw[dense as usize]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub students: IdMap,
    pub questions: IdMap,
    pub concepts: IdMap,
}

/// A practice record with raw identifiers, as read from a log file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEvent {
    pub student: String,
    pub question: String,
    pub concepts: Vec<String>,
    pub correct: bool,
    pub order_index: u64,
}

/// Student sequences plus the vocabularies they index into. Splits of one
/// dataset share the same `IdMaps`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub sequences: Vec<StudentSequence>,
    pub ids: Arc<IdMaps>,
}

impl Dataset {
    /// Builds a dataset from raw records.
    ///
    /// Records are grouped per student (students in first-seen order) and
    /// sorted by `order_index`; sequences are cut to their most recent
    /// [`MAX_SEQUENCE_LEN`] events and students with fewer than
    /// [`MIN_SEQUENCE_LEN`] events are dropped. Dense question and concept
    /// indices are then assigned in first-seen order over the retained
    /// sequences, which makes the construction idempotent under
    /// write-then-reload.
    pub fn from_raw(events: impl IntoIterator<Item = RawEvent>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
        for e in events {
            if e.concepts.is_empty() {
                return Err(Error::invalid(
                    "event",
                    format!("student `{}` question `{}` has no concepts", e.student, e.question),
                ));
            }
            let entry = groups.entry(e.student.clone()).or_insert_with(|| {
                order.push(e.student.clone());
                Vec::new()
            });
            entry.push(e);
        }
        if order.is_empty() {
            return Err(Error::Empty("event set"));
        }

        let mut ids = IdMaps::default();
        let mut sequences = Vec::new();
        for name in order {
            let mut evs = groups.remove(&name).unwrap_or_default();
            evs.sort_by_key(|e| e.order_index);
            if let Some(w) = evs.windows(2).find(|w| w[0].order_index == w[1].order_index) {
                return Err(Error::invalid(
                    "order_index",
                    format!("student `{name}` repeats order_index {}", w[0].order_index),
                ));
            }
            if evs.len() > MAX_SEQUENCE_LEN {
                evs.drain(..evs.len() - MAX_SEQUENCE_LEN);
            }
            if evs.len() < MIN_SEQUENCE_LEN {
                continue;
            }
            let student = ids.students.intern(&name);
            let events = evs
                .into_iter()
                .map(|e| {
                    let mut concepts: Vec<u32> =
                        e.concepts.iter().map(|c| ids.concepts.intern(c)).collect();
                    concepts.sort_unstable();
                    concepts.dedup();
                    InteractionEvent {
                        student,
                        question: ids.questions.intern(&e.question),
                        concepts,
                        correct: e.correct,
                        order_index: e.order_index,
                    }
                })
                .collect();
            sequences.push(StudentSequence { student, events });
        }
        if sequences.is_empty() {
            return Err(Error::Empty("dataset after dropping short sequences"));
        }
        Ok(Dataset { sequences, ids: Arc::new(ids) })
    }

    /// Raw records in dataset order, the inverse of [`Dataset::from_raw`].
    pub fn to_raw(&self) -> Vec<RawEvent> {
        self.events()
            .map(|e| RawEvent {
                student: self.ids.students.raw(e.student).into(),
                question: self.ids.questions.raw(e.question).into(),
                concepts: e.concepts.iter().map(|&c| self.ids.concepts.raw(c).into()).collect(),
                correct: e.correct,
                order_index: e.order_index,
            })
            .collect()
    }

    pub fn student_count(&self) -> usize {
        self.ids.students.len()
    }

    pub fn question_count(&self) -> usize {
        self.ids.questions.len()
    }

    pub fn concept_count(&self) -> usize {
        self.ids.concepts.len()
    }

    pub fn events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.sequences.iter().flat_map(|s| s.events.iter())
    }

    pub fn event_count(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).sum()
    }

    pub fn sequence_of(&self, student: u32) -> Option<&StudentSequence> {
        self.sequences.iter().find(|s| s.student == student)
    }

    /// Concatenates, per student, the events of `self` followed by those of
    /// `later` (the inverse of a per-student split).
    pub fn concat(&self, later: &Dataset) -> Result<Dataset> {
        if !Arc::ptr_eq(&self.ids, &later.ids) && self.ids != later.ids {
            return Err(Error::invalid("dataset pair", "splits do not share id maps"));
        }
        let mut sequences = self.sequences.clone();
        for s in &later.sequences {
            match sequences.iter_mut().find(|t| t.student == s.student) {
                Some(t) => t.events.extend(s.events.iter().cloned()),
                None => sequences.push(s.clone()),
            }
        }
        sequences.sort_by_key(|s| s.student);
        Ok(Dataset { sequences, ids: self.ids.clone() })
    }
}
