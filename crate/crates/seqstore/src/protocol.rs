//! The versioned late-materialization protocol: snapshot the mutable window
//! and a version pointer at inference time, reconstruct the identical
//! sequence at training time from the pinned immutable generation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{
    compute_checksum, group_of, Event, FeatureGroup, TenantSpec, VersionMetadata,
};
use crate::error::{Result, SeqStoreError};
use crate::immutable::{ImmutableStore, ScanQuery, ScanStats};
use crate::metrics::IoLedger;
use crate::mutable::MutableStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRequest {
    pub request_id: u64,
    pub user_id: u64,
    pub request_ts: u64,
}

/// What the ranking service observed: the logged portions (mutable snapshot,
/// version metadata) plus the complete sequence retained here as the
/// ground truth for consistency checks.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSnapshot {
    pub request: RankingRequest,
    pub mutable_snapshot: Vec<Event>,
    pub version_metadata: VersionMetadata,
    pub full_sequence: Vec<Event>,
}

/// Canonical binary footprint of the version pointer: fixed header plus a
/// fixed-size record per feature group, independent of sequence length.
pub fn metadata_wire_size(metadata: &VersionMetadata) -> u64 {
    let per_group: u64 = metadata
        .seq_length
        .keys()
        .map(|name| 2 + name.len() as u64 + 8)
        .sum();
    8 + 8 + 1 + 8 + 8 + per_group
}

pub struct ProtocolStores<'a> {
    pub mutable: &'a MutableStore,
    pub immutable: &'a ImmutableStore,
    pub groups: &'a [FeatureGroup],
}

/// Inference-time snapshotting: freeze the mutable window, log the version
/// pointer for the immutable window, retain the assembled sequence.
pub fn snapshot_at_inference(
    stores: &ProtocolStores,
    request: &RankingRequest,
    tenant: &TenantSpec,
    ledger: &IoLedger,
) -> Result<InferenceSnapshot> {
    let live = stores.immutable.live();
    let (generation_id, boundary_ts) = match &live {
        Some(generation) => (
            generation.generation_id(),
            generation.as_of_ts().min(request.request_ts),
        ),
        None => (0, 0),
    };

    let floor = stores.mutable.retention_floor_ts();
    if floor > boundary_ts {
        return Err(SeqStoreError::CoverageGap {
            retention_floor_ts: floor,
            immutable_end_ts: boundary_ts,
        });
    }

    let merged_mutable = stores
        .mutable
        .read_merged(request.user_id, request.request_ts);

    let mut mutable_snapshot: Vec<Event> = Vec::new();
    let mut immutable_events: Vec<Event> = Vec::new();
    let mut seq_length = BTreeMap::new();
    let mut min_start = u64::MAX;

    for group in stores.groups {
        let target = tenant.target_for(&group.name);
        let window_start = request.request_ts.saturating_sub(group.lookback_ms());
        min_start = min_start.min(window_start);

        // Mutable portion of this group, inside the lookback window and
        // strictly above the immutable boundary, truncated to the most
        // recent `target` events.
        let mut group_mutable: Vec<Event> = merged_mutable
            .iter()
            .filter(|e| {
                group.contains(e.event_type)
                    && e.timestamp > boundary_ts
                    && e.timestamp >= window_start
            })
            .cloned()
            .collect();
        if group_mutable.len() as u64 > target {
            let excess = group_mutable.len() - target as usize;
            group_mutable.drain(..excess);
        }

        let immutable_budget = target - group_mutable.len() as u64;
        let scanned = if immutable_budget > 0 && boundary_ts >= window_start {
            match &live {
                Some(generation) => {
                    let q = ScanQuery {
                        user_id: request.user_id,
                        feature_group: &group.name,
                        start_ts: window_start,
                        end_ts: boundary_ts,
                        max_events: immutable_budget,
                        required_traits: &tenant.required_traits,
                    };
                    generation.scan(&q)?.0
                }
                None => Vec::new(),
            }
        } else {
            Vec::new()
        };

        seq_length.insert(group.name.clone(), scanned.len() as u64);
        immutable_events.extend(scanned);
        mutable_snapshot.extend(group_mutable);
    }

    immutable_events.sort_by_key(Event::sort_key);
    mutable_snapshot.sort_by_key(Event::sort_key);

    let version_metadata = VersionMetadata {
        start_ts: min_start.min(boundary_ts),
        end_ts: boundary_ts,
        seq_length,
        checksum: Some(compute_checksum(&immutable_events)),
        generation_id,
    };
    IoLedger::add(&ledger.metadata_bytes, metadata_wire_size(&version_metadata));

    let mut full_sequence = immutable_events;
    full_sequence.extend(mutable_snapshot.iter().cloned());
    full_sequence.sort_by_key(Event::sort_key);

    Ok(InferenceSnapshot {
        request: *request,
        mutable_snapshot,
        version_metadata,
        full_sequence,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReconstructOptions {
    /// Retry against the live generation when the pinned one is gone.
    /// Divergence there is reported as `ScrubDivergence`, not silently
    /// accepted: a recompaction with a different deletion list may have
    /// legitimately rewritten history.
    pub fallback_to_live: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReconstructOutcome {
    pub events: Vec<Event>,
    pub scan_stats: Vec<ScanStats>,
}

/// Checks the reconstructed immutable window against the logged pointer:
/// per-group lengths, then the window checksum.
pub fn verify_window(
    metadata: &VersionMetadata,
    per_group_counts: &BTreeMap<String, u64>,
    immutable_events: &[Event],
) -> Result<()> {
    for (group, expected) in &metadata.seq_length {
        let got = per_group_counts.get(group).copied().unwrap_or(0);
        if got != *expected {
            return Err(SeqStoreError::O2OViolation {
                detail: format!(
                    "group {group:?} reconstructed {got} events, metadata says {expected}"
                ),
            });
        }
    }
    if let Some(expected) = metadata.checksum {
        let got = compute_checksum(immutable_events);
        if got != expected {
            return Err(SeqStoreError::O2OViolation {
                detail: format!("window checksum {got:#018x} != logged {expected:#018x}"),
            });
        }
    }
    Ok(())
}

/// Training-time time-travel reconstruction from a late-materialized
/// example's mutable snapshot and version metadata.
pub fn reconstruct(
    immutable: &ImmutableStore,
    groups: &[FeatureGroup],
    metadata: &VersionMetadata,
    mutable_snapshot: &[Event],
    user_id: u64,
    tenant: &TenantSpec,
    ledger: &IoLedger,
    opts: &ReconstructOptions,
) -> Result<ReconstructOutcome> {
    let mut outcome = ReconstructOutcome::default();

    let immutable_events = if metadata.generation_id == 0 {
        Vec::new()
    } else {
        let (generation_id, degraded) = match immutable.pin(metadata.generation_id) {
            Ok(_) => (metadata.generation_id, false),
            Err(stale @ SeqStoreError::StaleGeneration { .. }) => {
                if !opts.fallback_to_live {
                    return Err(stale);
                }
                match immutable.live_id() {
                    Some(live) => (live, true),
                    None => return Err(stale),
                }
            }
            Err(other) => return Err(other),
        };

        let mut events = Vec::new();
        let mut counts = BTreeMap::new();
        for (group_name, length) in &metadata.seq_length {
            if groups.iter().all(|g| &g.name != group_name) {
                return Err(SeqStoreError::Config(format!(
                    "metadata references unknown feature group {group_name:?}"
                )));
            }
            let q = ScanQuery {
                user_id,
                feature_group: group_name,
                start_ts: metadata.start_ts,
                end_ts: metadata.end_ts,
                max_events: *length,
                required_traits: &tenant.required_traits,
            };
            let (scanned, stats) = immutable.scan(generation_id, &q, ledger)?;
            outcome.scan_stats.push(stats);
            counts.insert(group_name.clone(), scanned.len() as u64);
            events.extend(scanned);
        }
        events.sort_by_key(Event::sort_key);
        if let Err(violation) = verify_window(metadata, &counts, &events) {
            if degraded {
                return Err(SeqStoreError::ScrubDivergence {
                    detail: format!(
                        "pinned generation {} evicted; live generation disagrees: {violation}",
                        metadata.generation_id
                    ),
                });
            }
            return Err(violation);
        }
        events
    };

    if metadata.generation_id == 0 {
        let counts = BTreeMap::new();
        verify_window(metadata, &counts, &immutable_events)?;
    }

    let mut events = immutable_events;
    events.extend(mutable_snapshot.iter().cloned());
    events.sort_by_key(Event::sort_key);
    outcome.events = events;
    Ok(outcome)
}

/// Universal post-check: no event may postdate the ranking request. The
/// boundary is inclusive: an event at exactly `request_ts` was visible.
pub fn assert_no_future_leakage(events: &[Event], request_ts: u64) -> Result<()> {
    let offenders: Vec<Event> = events
        .iter()
        .filter(|e| e.timestamp > request_ts)
        .cloned()
        .collect();
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(SeqStoreError::FutureLeakage {
            request_ts,
            offenders,
        })
    }
}

/// Group-aware flat-log oracle for the snapshot path: the expected full
/// sequence is, per group, the most recent `target` events within the
/// lookback window at or before the request. Test code only.
pub fn flat_log_expected_sequence(
    source_events: &[Event],
    groups: &[FeatureGroup],
    tenant: &TenantSpec,
    user_id: u64,
    request_ts: u64,
) -> Vec<Event> {
    let mut out = Vec::new();
    for group in groups {
        let window_start = request_ts.saturating_sub(group.lookback_ms());
        let mut events: Vec<Event> = source_events
            .iter()
            .filter(|e| {
                e.user_id == user_id
                    && group.contains(e.event_type)
                    && e.timestamp <= request_ts
                    && e.timestamp >= window_start
            })
            .cloned()
            .collect();
        events.sort_by_key(Event::sort_key);
        events.dedup_by_key(|e| e.sort_key());
        let target = tenant.target_for(&group.name) as usize;
        if events.len() > target {
            events.drain(..events.len() - target);
        }
        out.extend(events);
    }
    out.sort_by_key(Event::sort_key);
    out
}

/// Identity + required-trait equality between two sequences.
pub fn sequences_equivalent(a: &[Event], b: &[Event], required_traits: &BTreeSet<String>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.project(required_traits) == y.project(required_traits))
}

/// Convenience used by snapshot tests: the group a given event belongs to.
pub fn event_group<'a>(groups: &'a [FeatureGroup], event: &Event) -> Option<&'a FeatureGroup> {
    group_of(groups, event.event_type)
}
