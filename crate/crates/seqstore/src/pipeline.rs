//! Disaggregated preprocessing simulator: index-join of probe-side training
//! batches against the immutable store, pipelined prefetching under a
//! simulated clock, trainer-side rebatching, user-affinity bucketing, and
//! symmetric sharding.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{serialized_size, Event, FeatureGroup, TenantSpec, TrainingExample};
use crate::error::{Result, SeqStoreError};
use crate::immutable::{shard_of, ImmutableStore, ScanQuery, ScanStats};
use crate::metrics::IoLedger;
use crate::protocol::{reconstruct, verify_window, ReconstructOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Streaming,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    FatRow,
    LateMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    FailBatch,
    DropExampleAndCount,
}

impl ErrorPolicy {
    /// Streaming corruption should be loud; batch mode skips and counts.
    pub fn default_for(mode: RunMode) -> ErrorPolicy {
        match mode {
            RunMode::Streaming => ErrorPolicy::FailBatch,
            RunMode::Batch => ErrorPolicy::DropExampleAndCount,
        }
    }
}

/// Identical hash partitioning applied to primary training data and
/// immutable stripes: same user, same shard on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardMap {
    pub shard_count: u32,
}

impl ShardMap {
    pub fn shard_of(&self, user_id: u64) -> u32 {
        shard_of(user_id, self.shard_count)
    }
}

pub fn route_shards(batch_users: &[u64], map: &ShardMap) -> BTreeSet<u32> {
    batch_users.iter().map(|u| map.shard_of(*u)).collect()
}

/// Per-stage latencies for the simulated clock. Integer milliseconds and
/// microseconds keep the pipeline schedule exactly reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub primary_read_ms: u64,
    pub lookup_base_ms: u64,
    pub lookup_per_stripe_ms: u64,
    pub decode_per_event_us: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            primary_read_ms: 10,
            lookup_base_ms: 8,
            lookup_per_stripe_ms: 1,
            decode_per_event_us: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub batches_processed: u64,
    pub model_batches_emitted: u64,
    pub examples_processed: u64,
    pub examples_dropped: u64,
    pub lookup_calls: u64,
    pub lookups_saved: u64,
    pub stripes_read: u64,
    pub primary_read_bytes: u64,
    pub lookup_read_bytes: u64,
    pub simulated_us: u64,
    pub sum_primary_us: u64,
    pub sum_lookup_us: u64,
    pub gpu_starvation_pct: f64,
    pub worker_waste_pct: f64,
    pub batch_fanout: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scan_traces: Vec<ScanTrace>,
}

/// One storage scan as observed by the pipeline, for I/O-shape assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanTrace {
    pub stripes_read: u64,
    pub bytes_read: u64,
    pub returned_events: u64,
    pub manifest_run: Option<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializedBatch {
    pub batch_index: u64,
    pub example_ids: Vec<u64>,
    pub sequences: Vec<Vec<Event>>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: RunMode,
    pub paradigm: Paradigm,
    pub prefetch_depth: u64,
    pub latency: LatencyModel,
    pub shard_map: ShardMap,
    /// Form base batches shard-by-shard, mirroring symmetric primary
    /// sharding. Off = arrival-order batches (random assignment).
    pub symmetric_sharding: bool,
    pub bucket_by_user: bool,
    pub error_policy: ErrorPolicy,
    pub reshuffle_seed: u64,
    pub gpu_batch_time_ms: Option<u64>,
    pub collect_scan_traces: bool,
}

impl PipelineConfig {
    pub fn new(mode: RunMode, paradigm: Paradigm) -> Self {
        PipelineConfig {
            mode,
            paradigm,
            prefetch_depth: 1,
            latency: LatencyModel::default(),
            shard_map: ShardMap { shard_count: 1 },
            symmetric_sharding: true,
            bucket_by_user: false,
            error_policy: ErrorPolicy::default_for(mode),
            reshuffle_seed: 0,
            gpu_batch_time_ms: None,
            collect_scan_traces: false,
        }
    }
}

fn hour_of(ts: u64) -> u64 {
    ts / 3_600_000
}

/// Cluster a window of examples by user, hour-ordered within each user
/// (batch mode). Stable: arrival order is preserved within a (user, hour).
pub fn bucket_by_user(examples: Vec<TrainingExample>) -> Vec<TrainingExample> {
    let mut indexed: Vec<(usize, TrainingExample)> = examples.into_iter().enumerate().collect();
    indexed.sort_by_key(|(idx, e)| (e.user_id, hour_of(e.request_ts), *idx));
    indexed.into_iter().map(|(_, e)| e).collect()
}

/// Merge base batches into model-facing batches with a deterministic
/// seeded reshuffle inside each merge buffer.
pub fn rebatch<T>(base_batches: Vec<Vec<T>>, batch_size: u64, shuffle_seed: Option<u64>) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut buffer: Vec<T> = Vec::new();
    let mut merge_index = 0u64;
    let flush = |buffer: &mut Vec<T>, merge_index: &mut u64, out: &mut Vec<Vec<T>>| {
        if buffer.is_empty() {
            return;
        }
        let mut batch = std::mem::take(buffer);
        if let Some(seed) = shuffle_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(*merge_index));
            batch.shuffle(&mut rng);
        }
        *merge_index += 1;
        out.push(batch);
    };
    for base in base_batches {
        buffer.extend(base);
        while buffer.len() as u64 >= batch_size {
            let mut full: Vec<T> = buffer.drain(..batch_size as usize).collect();
            flush(&mut full, &mut merge_index, &mut out);
        }
    }
    // final short batch allowed
    flush(&mut buffer, &mut merge_index, &mut out);
    out
}

/// Recommended DPP worker count for a measured run, plus the starvation
/// proxy at that provisioning.
pub fn advise_worker_count(stats: &PipelineStats, gpu_batch_time_ms: u64) -> Result<(u64, f64)> {
    if gpu_batch_time_ms == 0 {
        return Err(SeqStoreError::Config("gpu_batch_time_ms must be > 0".into()));
    }
    if stats.batches_processed == 0 {
        return Ok((1, 0.0));
    }
    let prep_ms_per_batch = (stats.sum_primary_us + stats.sum_lookup_us) as f64
        / stats.batches_processed as f64
        / 1_000.0;
    let workers = (prep_ms_per_batch / gpu_batch_time_ms as f64).ceil().max(1.0) as u64;
    let starvation = if prep_ms_per_batch <= 0.0 {
        0.0
    } else {
        (1.0 - workers as f64 * gpu_batch_time_ms as f64 / prep_ms_per_batch).max(0.0)
    };
    Ok((workers, starvation))
}

/// Two-stage bounded-buffer schedule under the simulated clock. Depth 0 is
/// fully synchronous; depth d lets the probe read for batch N+1 overlap the
/// lookup for batch N, up to d batches ahead.
pub fn pipeline_schedule_us(primary_us: &[u64], lookup_us: &[u64], depth: u64) -> u64 {
    assert_eq!(primary_us.len(), lookup_us.len());
    let n = primary_us.len();
    if n == 0 {
        return 0;
    }
    let mut probe_end = vec![0u64; n];
    let mut lookup_end = vec![0u64; n];
    for i in 0..n {
        let prev_probe = if i > 0 { probe_end[i - 1] } else { 0 };
        // with buffer depth d the probe for batch i waits until the lookup
        // for batch i-1-d has drained a slot; depth 0 degenerates to serial
        let gate = if (i as u64) > depth {
            lookup_end[i - 1 - depth as usize]
        } else {
            0
        };
        probe_end[i] = prev_probe.max(gate) + primary_us[i];
        let prev_lookup = if i > 0 { lookup_end[i - 1] } else { 0 };
        lookup_end[i] = prev_lookup.max(probe_end[i]) + lookup_us[i];
    }
    lookup_end[n - 1]
}

struct LookupResult {
    sequences: Vec<Option<Vec<Event>>>,
    stripes: u64,
    bytes: u64,
    events: u64,
    calls: u64,
    saved: u64,
    traces: Vec<ScanTrace>,
}

fn record_stats(stats: &ScanStats, returned: u64, acc: &mut LookupResult) {
    acc.stripes += stats.stripes_read;
    acc.bytes += stats.bytes_read;
    acc.events += returned;
    acc.traces.push(ScanTrace {
        stripes_read: stats.stripes_read,
        bytes_read: stats.bytes_read,
        returned_events: returned,
        manifest_run: stats.manifest_run,
    });
}

fn materialize_batch(
    batch: &[TrainingExample],
    tenant: &TenantSpec,
    groups: &[FeatureGroup],
    immutable: &ImmutableStore,
    cfg: &PipelineConfig,
    ledger: &IoLedger,
) -> Result<LookupResult> {
    let mut out = LookupResult {
        sequences: vec![None; batch.len()],
        stripes: 0,
        bytes: 0,
        events: 0,
        calls: 0,
        saved: 0,
        traces: Vec::new(),
    };

    if cfg.paradigm == Paradigm::FatRow {
        for (i, example) in batch.iter().enumerate() {
            let payload = example.fat_row_payload().ok_or_else(|| {
                SeqStoreError::Config("fat-row run over late-materialized examples".into())
            })?;
            out.sequences[i] = Some(payload.to_vec());
        }
        return Ok(out);
    }

    let opts = ReconstructOptions::default();
    let bucketing = cfg.bucket_by_user && cfg.mode == RunMode::Batch;

    if !bucketing {
        for (i, example) in batch.iter().enumerate() {
            let metadata = example.version_metadata().ok_or_else(|| {
                SeqStoreError::Config("late-mat run over fat-row examples".into())
            })?;
            out.calls += 1;
            match reconstruct(
                immutable,
                groups,
                metadata,
                &example.mutable_snapshot,
                example.user_id,
                tenant,
                ledger,
                &opts,
            ) {
                Ok(reconstructed) => {
                    for stats in &reconstructed.scan_stats {
                        let returned = 0; // per-scan return counts folded below
                        record_stats(stats, returned, &mut out);
                    }
                    if let Some(trace) = out.traces.last_mut() {
                        // attribute the immutable event total to the last scan
                        trace.returned_events = (reconstructed.events.len()
                            - example.mutable_snapshot.len())
                            as u64;
                    }
                    out.events += (reconstructed.events.len() - example.mutable_snapshot.len()) as u64;
                    out.sequences[i] = Some(reconstructed.events);
                }
                Err(err) => match cfg.error_policy {
                    ErrorPolicy::FailBatch => return Err(err),
                    ErrorPolicy::DropExampleAndCount => {}
                },
            }
        }
        return Ok(out);
    }

    // Affinity bucketing: one shared lookup per compatible (user, window)
    // group; the superset scan is tail-filtered per example.
    let mut shared: BTreeMap<(u64, u64, Vec<String>), Vec<usize>> = BTreeMap::new();
    for (i, example) in batch.iter().enumerate() {
        let metadata = example.version_metadata().ok_or_else(|| {
            SeqStoreError::Config("late-mat run over fat-row examples".into())
        })?;
        let signature: Vec<String> = metadata.seq_length.keys().cloned().collect();
        shared
            .entry((example.user_id, metadata.generation_id, signature))
            .or_default()
            .push(i);
    }

    for ((user_id, generation_id, signature), members) in shared {
        out.calls += 1;
        out.saved += members.len() as u64 - 1;

        let mut run = || -> Result<Vec<(usize, Vec<Event>)>> {
            let min_start = members
                .iter()
                .map(|&i| batch[i].version_metadata().unwrap().start_ts)
                .min()
                .unwrap();
            let max_end = members
                .iter()
                .map(|&i| batch[i].version_metadata().unwrap().end_ts)
                .max()
                .unwrap();

            // one superset scan per feature group in the shared signature
            let mut group_events: BTreeMap<&str, Vec<Event>> = BTreeMap::new();
            if generation_id != 0 {
                for group_name in &signature {
                    let q = ScanQuery {
                        user_id,
                        feature_group: group_name,
                        start_ts: min_start,
                        end_ts: max_end,
                        max_events: u64::MAX,
                        required_traits: &tenant.required_traits,
                    };
                    let (events, stats) = immutable.scan(generation_id, &q, ledger)?;
                    record_stats(&stats, events.len() as u64, &mut out);
                    group_events.insert(group_name, events);
                }
            }

            let mut results = Vec::with_capacity(members.len());
            for &i in &members {
                let example = &batch[i];
                let metadata = example.version_metadata().unwrap();
                let mut immutable_events = Vec::new();
                let mut counts = BTreeMap::new();
                for (group_name, length) in &metadata.seq_length {
                    let events = group_events
                        .get(group_name.as_str())
                        .map(|v| v.as_slice())
                        .unwrap_or(&[]);
                    let mut filtered: Vec<Event> = events
                        .iter()
                        .filter(|e| {
                            e.timestamp >= metadata.start_ts && e.timestamp <= metadata.end_ts
                        })
                        .cloned()
                        .collect();
                    if filtered.len() as u64 > *length {
                        let excess = filtered.len() - *length as usize;
                        filtered.drain(..excess);
                    }
                    counts.insert(group_name.clone(), filtered.len() as u64);
                    immutable_events.extend(filtered);
                }
                immutable_events.sort_by_key(Event::sort_key);
                verify_window(metadata, &counts, &immutable_events)?;
                let mut sequence = immutable_events;
                sequence.extend(example.mutable_snapshot.iter().cloned());
                sequence.sort_by_key(Event::sort_key);
                results.push((i, sequence));
            }
            Ok(results)
        };

        match run() {
            Ok(results) => {
                for (i, sequence) in results {
                    out.sequences[i] = Some(sequence);
                }
            }
            Err(err) => match cfg.error_policy {
                ErrorPolicy::FailBatch => return Err(err),
                ErrorPolicy::DropExampleAndCount => {}
            },
        }
    }
    Ok(out)
}

/// Run one tenant's preprocessing over a stream of training examples.
/// Output content is a pure function of the inputs; prefetch depth and the
/// latency model only shape `PipelineStats`.
pub fn run_pipeline(
    examples: &[TrainingExample],
    tenant: &TenantSpec,
    groups: &[FeatureGroup],
    immutable: &ImmutableStore,
    cfg: &PipelineConfig,
    ledger: &IoLedger,
) -> Result<(Vec<MaterializedBatch>, PipelineStats)> {
    tenant.validate()?;
    let mut stats = PipelineStats::default();

    // Base-batch formation. Symmetric sharding mirrors the ingestion-side
    // partitioning: every base batch drawn from a single shard.
    let mut partitions: Vec<Vec<TrainingExample>> = if cfg.symmetric_sharding {
        let mut per_shard: Vec<Vec<TrainingExample>> =
            (0..cfg.shard_map.shard_count).map(|_| Vec::new()).collect();
        for example in examples {
            per_shard[cfg.shard_map.shard_of(example.user_id) as usize].push(example.clone());
        }
        per_shard.retain(|p| !p.is_empty());
        per_shard
    } else {
        vec![examples.to_vec()]
    };
    if cfg.bucket_by_user && cfg.mode == RunMode::Batch {
        partitions = partitions.into_iter().map(bucket_by_user).collect();
    }
    let mut base_batches: Vec<Vec<TrainingExample>> = Vec::new();
    for partition in partitions {
        for chunk in partition.chunks(tenant.base_batch_size as usize) {
            base_batches.push(chunk.to_vec());
        }
    }

    let mut primary_us = Vec::with_capacity(base_batches.len());
    let mut lookup_us = Vec::with_capacity(base_batches.len());
    let mut materialized: Vec<Vec<(u64, Vec<Event>)>> = Vec::new();

    for batch in &base_batches {
        stats.batches_processed += 1;
        let batch_bytes: u64 = batch.iter().map(serialized_size).sum();
        stats.primary_read_bytes += batch_bytes;
        IoLedger::add(&ledger.primary_read_bytes, batch_bytes);
        let fanout = route_shards(
            &batch.iter().map(|e| e.user_id).collect::<Vec<_>>(),
            &cfg.shard_map,
        )
        .len() as u64;
        stats.batch_fanout.push(fanout);

        let result = materialize_batch(batch, tenant, groups, immutable, cfg, ledger)?;
        stats.lookup_calls += result.calls;
        stats.lookups_saved += result.saved;
        stats.stripes_read += result.stripes;
        stats.lookup_read_bytes += result.bytes;
        IoLedger::add(&ledger.lookup_read_bytes, result.bytes);
        if cfg.collect_scan_traces {
            stats.scan_traces.extend(result.traces);
        }

        primary_us.push(cfg.latency.primary_read_ms * 1_000);
        lookup_us.push(if cfg.paradigm == Paradigm::LateMat {
            cfg.latency.lookup_base_ms * 1_000
                + cfg.latency.lookup_per_stripe_ms * 1_000 * result.stripes
                + cfg.latency.decode_per_event_us * result.events
        } else {
            0
        });

        let mut rows = Vec::new();
        for (example, sequence) in batch.iter().zip(result.sequences) {
            match sequence {
                Some(sequence) => {
                    stats.examples_processed += 1;
                    rows.push((example.example_id, sequence));
                }
                None => stats.examples_dropped += 1,
            }
        }
        materialized.push(rows);
    }

    stats.sum_primary_us = primary_us.iter().sum();
    stats.sum_lookup_us = lookup_us.iter().sum();
    stats.simulated_us = pipeline_schedule_us(&primary_us, &lookup_us, cfg.prefetch_depth);
    if stats.simulated_us > 0 {
        let busy = stats.sum_primary_us + stats.sum_lookup_us;
        stats.worker_waste_pct =
            ((2 * stats.simulated_us).saturating_sub(busy)) as f64 / (2 * stats.simulated_us) as f64;
    }
    if let Some(gpu_ms) = cfg.gpu_batch_time_ms {
        let (_, starvation) = advise_worker_count(&stats, gpu_ms)?;
        stats.gpu_starvation_pct = starvation;
    }

    // Trainer-side rebatching: merge base batches up to the model batch
    // size; batch mode reshuffles inside each merge buffer.
    let shuffle_seed = match cfg.mode {
        RunMode::Batch => Some(cfg.reshuffle_seed),
        RunMode::Streaming => None,
    };
    let model_batches = rebatch(materialized, tenant.batch_size, shuffle_seed);
    let out: Vec<MaterializedBatch> = model_batches
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            let (example_ids, sequences) = rows.into_iter().unzip();
            MaterializedBatch {
                batch_index: i as u64,
                example_ids,
                sequences,
            }
        })
        .collect();
    stats.model_batches_emitted = out.len() as u64;
    Ok((out, stats))
}

/// Smoke-test variant of the prefetch contract with real threads: a bounded
/// channel of `depth` batches between the probe stage and the lookup stage.
/// Emission order must match arrival order; content must equal the
/// simulated-clock run.
pub fn run_pipeline_threaded(
    examples: &[TrainingExample],
    tenant: &TenantSpec,
    groups: &[FeatureGroup],
    immutable: &ImmutableStore,
    cfg: &PipelineConfig,
    ledger: &IoLedger,
) -> Result<Vec<MaterializedBatch>> {
    let depth = cfg.prefetch_depth.max(1) as usize;
    let (tx, rx) = crossbeam_channel::bounded::<Vec<TrainingExample>>(depth);

    let base_batches: Vec<Vec<TrainingExample>> = examples
        .chunks(tenant.base_batch_size as usize)
        .map(|c| c.to_vec())
        .collect();

    std::thread::scope(|scope| {
        let producer = scope.spawn(move || {
            for batch in base_batches {
                if tx.send(batch).is_err() {
                    return;
                }
            }
        });
        let mut materialized: Vec<Vec<(u64, Vec<Event>)>> = Vec::new();
        for batch in rx {
            let result = materialize_batch(&batch, tenant, groups, immutable, cfg, ledger)?;
            let mut rows = Vec::new();
            for (example, sequence) in batch.iter().zip(result.sequences) {
                if let Some(sequence) = sequence {
                    rows.push((example.example_id, sequence));
                }
            }
            materialized.push(rows);
        }
        producer.join().expect("probe stage panicked");
        let shuffle_seed = match cfg.mode {
            RunMode::Batch => Some(cfg.reshuffle_seed),
            RunMode::Streaming => None,
        };
        let out = rebatch(materialized, tenant.batch_size, shuffle_seed)
            .into_iter()
            .enumerate()
            .map(|(i, rows)| {
                let (example_ids, sequences) = rows.into_iter().unzip();
                MaterializedBatch {
                    batch_index: i as u64,
                    example_ids,
                    sequences,
                }
            })
            .collect();
        Ok(out)
    })
}
