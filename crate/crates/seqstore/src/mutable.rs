//! The real-time recent-history tier.
//!
//! Appends are blind writes: each call lands a new unsorted segment without
//! reading existing state. Merge, dedupe, and ordering are deferred to read
//! time. Duplicate (timestamp, event_id) pairs resolve first-write-wins, so
//! at-least-once redelivery from the ingestion stream is idempotent.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::domain::{serialized_size, sort_dedupe_first_wins, Event};
use crate::metrics::IoLedger;

#[derive(Debug, Default)]
struct UserSegments {
    segments: Vec<Vec<Event>>,
}

#[derive(Debug, Default)]
pub struct MutableStore {
    state: RwLock<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    users: HashMap<u64, UserSegments>,
    retention_floor_ts: u64,
}

impl MutableStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// O(1) amortized in the user's existing history size.
    pub fn append(&self, user_id: u64, events: Vec<Event>, ledger: &IoLedger) {
        if events.is_empty() {
            return;
        }
        IoLedger::add(&ledger.mutable_write_bytes, serialized_size(&events));
        let mut inner = self.state.write().unwrap();
        inner
            .users
            .entry(user_id)
            .or_default()
            .segments
            .push(events);
    }

    /// Canonical sort of the union of the user's segments, filtered to
    /// `timestamp <= up_to_ts`, first-appended payload winning on duplicates.
    pub fn read_merged(&self, user_id: u64, up_to_ts: u64) -> Vec<Event> {
        let inner = self.state.read().unwrap();
        let Some(user) = inner.users.get(&user_id) else {
            return Vec::new();
        };
        let flattened: Vec<Event> = user
            .segments
            .iter()
            .flatten()
            .filter(|e| e.timestamp <= up_to_ts)
            .cloned()
            .collect();
        sort_dedupe_first_wins(flattened)
    }

    /// Removes every event at or below the floor. The compaction driver is
    /// responsible for only calling this once the immutable generation covers
    /// the evicted range.
    pub fn evict_below(&self, retention_floor_ts: u64) -> u64 {
        let mut inner = self.state.write().unwrap();
        let mut evicted = 0u64;
        for user in inner.users.values_mut() {
            for segment in &mut user.segments {
                let before = segment.len();
                segment.retain(|e| e.timestamp > retention_floor_ts);
                evicted += (before - segment.len()) as u64;
            }
            user.segments.retain(|s| !s.is_empty());
        }
        inner.users.retain(|_, u| !u.segments.is_empty());
        inner.retention_floor_ts = inner.retention_floor_ts.max(retention_floor_ts);
        evicted
    }

    pub fn retention_floor_ts(&self) -> u64 {
        self.state.read().unwrap().retention_floor_ts
    }

    /// Debug dump of the merged state per user, sorted by user id.
    pub fn dump(&self) -> Vec<(u64, Vec<Event>)> {
        let inner = self.state.read().unwrap();
        let mut users: Vec<u64> = inner.users.keys().copied().collect();
        drop(inner);
        users.sort_unstable();
        users
            .into_iter()
            .map(|u| (u, self.read_merged(u, u64::MAX)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EventType, TraitValue};
    use std::collections::BTreeMap;

    fn event(user: u64, ts: u64, id: u64) -> Event {
        Event {
            user_id: user,
            event_id: id,
            timestamp: ts,
            item_id: id,
            event_type: EventType::View,
            traits: BTreeMap::new(),
        }
    }

    #[test]
    fn unknown_user_reads_empty() {
        let store = MutableStore::new();
        assert!(store.read_merged(42, u64::MAX).is_empty());
    }

    #[test]
    fn append_then_read_is_sorted() {
        let store = MutableStore::new();
        let ledger = IoLedger::new();
        store.append(1, vec![event(1, 5, 2), event(1, 3, 1)], &ledger);
        let merged = store.read_merged(1, u64::MAX);
        assert_eq!(
            merged.iter().map(Event::sort_key).collect::<Vec<_>>(),
            vec![(3, 1), (5, 2)]
        );
        assert!(ledger.snapshot().mutable_write_bytes > 0);
    }

    #[test]
    fn up_to_ts_filters() {
        let store = MutableStore::new();
        let ledger = IoLedger::new();
        store.append(1, vec![event(1, 5, 2), event(1, 3, 1)], &ledger);
        assert!(store.read_merged(1, 2).is_empty());
        assert_eq!(store.read_merged(1, 3).len(), 1);
    }

    #[test]
    fn duplicate_across_segments_keeps_first_appended() {
        let store = MutableStore::new();
        let ledger = IoLedger::new();
        let mut first = event(1, 10, 7);
        first
            .traits
            .insert("watch_time_ms".to_owned(), TraitValue::I64(111));
        let mut redelivered = event(1, 10, 7);
        redelivered
            .traits
            .insert("watch_time_ms".to_owned(), TraitValue::I64(999));
        store.append(1, vec![first.clone()], &ledger);
        store.append(1, vec![redelivered], &ledger);
        let merged = store.read_merged(1, u64::MAX);
        assert_eq!(merged, vec![first]);
    }

    #[test]
    fn interleaved_segments_match_flatten_sort_oracle() {
        let store = MutableStore::new();
        let ledger = IoLedger::new();
        let seg_a = vec![event(1, 9, 3), event(1, 1, 1)];
        let seg_b = vec![event(1, 5, 2), event(1, 9, 3), event(1, 12, 4)];
        store.append(1, seg_a.clone(), &ledger);
        store.append(1, seg_b.clone(), &ledger);

        let mut oracle: Vec<Event> = seg_a.into_iter().chain(seg_b).collect();
        oracle.sort_by_key(Event::sort_key);
        oracle.dedup_by_key(|e| e.sort_key());
        assert_eq!(store.read_merged(1, u64::MAX), oracle);
    }

    #[test]
    fn evict_counts_and_clears() {
        let store = MutableStore::new();
        let ledger = IoLedger::new();
        store.append(1, vec![event(1, 1, 1), event(1, 5, 2), event(1, 9, 3)], &ledger);
        assert_eq!(store.evict_below(0), 0);
        assert_eq!(store.evict_below(5), 2);
        assert_eq!(
            store
                .read_merged(1, u64::MAX)
                .iter()
                .map(|e| e.timestamp)
                .collect::<Vec<_>>(),
            vec![9]
        );
        assert_eq!(store.evict_below(100), 1);
        assert!(store.read_merged(1, u64::MAX).is_empty());
        assert_eq!(store.retention_floor_ts(), 100);
    }
}
