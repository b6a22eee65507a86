//! Shared domain types, the canonical event ordering, and the window checksum.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeqStoreError};

pub const MS_PER_DAY: u64 = 24 * 60 * 60 * 1000;

/// Trait names that resolve to fixed `Event` fields rather than entries in
/// the sparse trait map. They are dense: present on every event.
pub const TRAIT_TIMESTAMP: &str = "timestamp";
pub const TRAIT_EVENT_ID: &str = "event_id";
pub const TRAIT_ITEM_ID: &str = "item_id";
pub const TRAIT_EVENT_TYPE: &str = "event_type";

pub fn is_dense_trait(name: &str) -> bool {
    matches!(
        name,
        TRAIT_TIMESTAMP | TRAIT_EVENT_ID | TRAIT_ITEM_ID | TRAIT_EVENT_TYPE
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    View,
    Like,
    Comment,
    Share,
    VideoWatch,
}

impl EventType {
    pub const ALL: [EventType; 5] = [
        EventType::View,
        EventType::Like,
        EventType::Comment,
        EventType::Share,
        EventType::VideoWatch,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::View => "view",
            EventType::Like => "like",
            EventType::Comment => "comment",
            EventType::Share => "share",
            EventType::VideoWatch => "video_watch",
        }
    }

    pub fn from_str_name(s: &str) -> Option<EventType> {
        Some(match s {
            "view" => EventType::View,
            "like" => EventType::Like,
            "comment" => EventType::Comment,
            "share" => EventType::Share,
            "video_watch" => EventType::VideoWatch,
            _ => return None,
        })
    }
}

/// A typed trait value. Strings are capped at 255 bytes so every value has a
/// compact length-prefixed binary form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraitValue {
    I64(i64),
    F32(f32),
    Str(String),
}

impl TraitValue {
    pub fn validate(&self) -> Result<()> {
        if let TraitValue::Str(s) = self {
            if s.len() > 255 {
                return Err(SeqStoreError::Encoding(format!(
                    "string trait value of {} bytes exceeds the 255-byte cap",
                    s.len()
                )));
            }
        }
        Ok(())
    }
}

/// One user interaction; the atomic unit of every sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub user_id: u64,
    pub event_id: u64,
    pub timestamp: u64,
    pub item_id: u64,
    pub event_type: EventType,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub traits: BTreeMap<String, TraitValue>,
}

impl Event {
    pub fn sort_key(&self) -> (u64, u64) {
        (self.timestamp, self.event_id)
    }

    /// Restrict the event to the traits a tenant decodes. Identity fields
    /// (timestamp, event_id) are always kept; non-required dense fields are
    /// zeroed so projected events from different code paths compare equal.
    pub fn project(&self, required_traits: &BTreeSet<String>) -> Event {
        Event {
            user_id: self.user_id,
            event_id: self.event_id,
            timestamp: self.timestamp,
            item_id: if required_traits.contains(TRAIT_ITEM_ID) {
                self.item_id
            } else {
                0
            },
            // non-required dense fields collapse to the decoder's defaults so
            // projected events from different code paths compare equal
            event_type: if required_traits.contains(TRAIT_EVENT_TYPE) {
                self.event_type
            } else {
                EventType::View
            },
            traits: self
                .traits
                .iter()
                .filter(|(name, _)| required_traits.contains(name.as_str()))
                .map(|(name, value)| (name.clone(), value.clone()))
                .collect(),
        }
    }
}

/// A named partition of event types with its own retention window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub event_types: BTreeSet<EventType>,
    pub lookback_days: u64,
}

impl FeatureGroup {
    pub fn lookback_ms(&self) -> u64 {
        self.lookback_days * MS_PER_DAY
    }

    pub fn contains(&self, ty: EventType) -> bool {
        self.event_types.contains(&ty)
    }
}

/// Checks that the groups partition the full event-type space: every type in
/// exactly one group, and every group retains at least one day.
pub fn validate_feature_groups(groups: &[FeatureGroup]) -> Result<()> {
    let mut seen: BTreeMap<EventType, &str> = BTreeMap::new();
    for g in groups {
        if g.lookback_days < 1 {
            return Err(SeqStoreError::Config(format!(
                "feature group {:?} has lookback_days {} (must be >= 1)",
                g.name, g.lookback_days
            )));
        }
        if g.event_types.is_empty() {
            return Err(SeqStoreError::Config(format!(
                "feature group {:?} has no event types",
                g.name
            )));
        }
        for ty in &g.event_types {
            if let Some(other) = seen.insert(*ty, &g.name) {
                return Err(SeqStoreError::Config(format!(
                    "event type {:?} appears in groups {:?} and {:?}",
                    ty.as_str(),
                    other,
                    g.name
                )));
            }
        }
    }
    for ty in EventType::ALL {
        if !seen.contains_key(&ty) {
            return Err(SeqStoreError::Config(format!(
                "event type {:?} is not covered by any feature group",
                ty.as_str()
            )));
        }
    }
    let mut names = BTreeSet::new();
    for g in groups {
        if !names.insert(g.name.as_str()) {
            return Err(SeqStoreError::Config(format!(
                "duplicate feature group name {:?}",
                g.name
            )));
        }
    }
    Ok(())
}

pub fn group_of(groups: &[FeatureGroup], ty: EventType) -> Option<&FeatureGroup> {
    groups.iter().find(|g| g.contains(ty))
}

/// The lightweight pointer logged per training example in place of the full
/// immutable history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionMetadata {
    pub start_ts: u64,
    pub end_ts: u64,
    pub seq_length: BTreeMap<String, u64>,
    pub checksum: Option<u64>,
    pub generation_id: u64,
}

/// Label(s) plus features for one ranking request; `uih_payload` carries
/// either the fully materialized history (fat row) or the version pointer
/// (late materialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub example_id: u64,
    pub user_id: u64,
    pub request_ts: u64,
    pub label_ts: u64,
    pub labels: BTreeMap<String, f64>,
    pub scalar_features: String,
    pub mutable_snapshot: Vec<Event>,
    pub uih_payload: UihPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UihPayload {
    FatRow(Vec<Event>),
    VersionMetadata(VersionMetadata),
}

impl TrainingExample {
    pub fn version_metadata(&self) -> Option<&VersionMetadata> {
        match &self.uih_payload {
            UihPayload::VersionMetadata(m) => Some(m),
            UihPayload::FatRow(_) => None,
        }
    }

    pub fn fat_row_payload(&self) -> Option<&[Event]> {
        match &self.uih_payload {
            UihPayload::FatRow(events) => Some(events),
            UihPayload::VersionMetadata(_) => None,
        }
    }
}

/// One model tenant's requirements against the shared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenantSpec {
    pub tenant_name: String,
    pub target_seq_length: BTreeMap<String, u64>,
    pub required_traits: BTreeSet<String>,
    pub batch_size: u64,
    pub base_batch_size: u64,
}

impl TenantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_batch_size == 0 || self.batch_size == 0 {
            return Err(SeqStoreError::Config(format!(
                "tenant {:?}: batch sizes must be >= 1",
                self.tenant_name
            )));
        }
        if self.base_batch_size > self.batch_size {
            return Err(SeqStoreError::Config(format!(
                "tenant {:?}: base_batch_size {} exceeds batch_size {}",
                self.tenant_name, self.base_batch_size, self.batch_size
            )));
        }
        Ok(())
    }

    pub fn target_for(&self, group: &str) -> u64 {
        self.target_seq_length.get(group).copied().unwrap_or(0)
    }
}

/// Knobs for the deterministic synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub num_users: u64,
    pub days: u64,
    pub requests_per_user_per_day: u64,
    pub events_per_user_per_day: u64,
    pub rng_seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_users", self.num_users),
            ("days", self.days),
            ("requests_per_user_per_day", self.requests_per_user_per_day),
            ("events_per_user_per_day", self.events_per_user_per_day),
        ] {
            if v < 1 {
                return Err(SeqStoreError::Config(format!("{name} must be >= 1, got {v}")));
            }
        }
        Ok(())
    }
}

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a/64 over each event's timestamp then event_id, both little-endian.
/// Order-sensitive by construction; the empty list hashes to the offset basis.
pub fn compute_checksum(events: &[Event]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for event in events {
        for byte in event
            .timestamp
            .to_le_bytes()
            .into_iter()
            .chain(event.event_id.to_le_bytes())
        {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

/// Sorts one user's events into the canonical (timestamp, event_id) order.
/// Stable and idempotent; duplicate keys are an error.
pub fn canonical_sort(mut events: Vec<Event>) -> Result<Vec<Event>> {
    events.sort_by_key(Event::sort_key);
    for pair in events.windows(2) {
        if pair[0].sort_key() == pair[1].sort_key() {
            return Err(SeqStoreError::DuplicateEvent {
                user_id: pair[1].user_id,
                timestamp: pair[1].timestamp,
                event_id: pair[1].event_id,
            });
        }
    }
    Ok(events)
}

/// Sort + first-occurrence dedupe, for merge paths where redelivered
/// duplicates are expected rather than a bug.
pub fn sort_dedupe_first_wins(mut events: Vec<Event>) -> Vec<Event> {
    // stable sort keeps the first-appended payload in front of its duplicates
    events.sort_by_key(Event::sort_key);
    events.dedup_by_key(|e| e.sort_key());
    events
}

pub fn serialized_size<T: Serialize>(value: &T) -> u64 {
    serde_json::to_vec(value).map(|v| v.len() as u64).unwrap_or(0)
}

pub fn events_to_jsonl(events: &[Event]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn events_from_jsonl(bytes: &[u8]) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for line in bytes.split(|&b| b == b'\n') {
        if line.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let event: Event = serde_json::from_slice(line)?;
        for value in event.traits.values() {
            value.validate()?;
        }
        events.push(event);
    }
    Ok(events)
}
