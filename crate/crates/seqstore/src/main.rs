use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use seqstore::domain::{
    events_from_jsonl, events_to_jsonl, serialized_size, FeatureGroup, TenantSpec, TrainingExample,
    WorkloadSpec,
};
use seqstore::error::{Result, SeqStoreError};
use seqstore::immutable::{compact, CompactionConfig, DeletionList, Generation, ImmutableStore};
use seqstore::metrics::IoLedger;
use seqstore::mutable::MutableStore;
use seqstore::pipeline::{run_pipeline, ErrorPolicy, Paradigm, RunMode};
use seqstore::protocol::{snapshot_at_inference, ProtocolStores, RankingRequest};
use seqstore::scenario::{
    analytic_inputs, build_scenario, run_scenario, run_training, verify_scenario, ScenarioConfig,
};
use seqstore::workload::generate_workload;

#[derive(Parser)]
#[command(name = "seqstore", version, about = "Versioned late materialization for UIH training data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic workload (events, requests, labels).
    GenWorkload(GenWorkloadArgs),
    /// Load an event log into the mutable tier and dump the merged view.
    Ingest(IngestArgs),
    /// Compact an event log into an immutable generation directory.
    Compact(CompactArgs),
    /// Simulate one inference-time snapshot against a generation.
    Snapshot(SnapshotArgs),
    /// Run the training pipeline for one tenant over a scenario substrate.
    TrainSim(TrainSimArgs),
    /// Build a scenario and run the full O2O verification pass.
    Verify(VerifyArgs),
    /// Produce the write-amplification report from two ledger snapshots.
    Report(ReportArgs),
    /// Run the full lifecycle: ingest, compact, snapshot, train, verify, report.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct GenWorkloadArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompactArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, value_name = "TS")]
    as_of: u64,
    #[arg(long)]
    deletions: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    generation_id: u64,
    #[arg(long, default_value_t = 128)]
    stripe_capacity: u32,
    #[arg(long, default_value_t = 1)]
    shards: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SnapshotArgs {
    /// Mutable-tier events (everything newer than the generation horizon).
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    generation: Option<PathBuf>,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long)]
    tenant: PathBuf,
    #[arg(long)]
    user: u64,
    #[arg(long, value_name = "TS")]
    ts: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSimArgs {
    /// Scenario config providing the data substrate.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    #[arg(long, value_parser = parse_paradigm)]
    paradigm: Paradigm,
    /// Tenant spec JSON; defaults to the scenario's first tenant.
    #[arg(long)]
    tenant: Option<PathBuf>,
    #[arg(long)]
    prefetch_depth: Option<u64>,
    #[arg(long)]
    shards: Option<u32>,
    #[arg(long)]
    bucket_by_user: bool,
    #[arg(long)]
    stats_out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    fatrow_stats: PathBuf,
    #[arg(long)]
    latemat_stats: PathBuf,
    /// Scenario config the ledgers came from; the analytic side is recomputed
    /// from it independently of the measured counters.
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<RunMode, String> {
    match s {
        "streaming" => Ok(RunMode::Streaming),
        "batch" => Ok(RunMode::Batch),
        other => Err(format!("unknown mode {other:?} (expected streaming|batch)")),
    }
}

fn parse_paradigm(s: &str) -> std::result::Result<Paradigm, String> {
    match s {
        "fatrow" => Ok(Paradigm::FatRow),
        "latemat" => Ok(Paradigm::LateMat),
        other => Err(format!("unknown paradigm {other:?} (expected fatrow|latemat)")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)
        .map_err(|e| SeqStoreError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| SeqStoreError::Config(format!("invalid JSON in {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn write_examples_jsonl(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    let mut out = Vec::new();
    for example in examples {
        serde_json::to_writer(&mut out, example)?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn cmd_gen_workload(args: GenWorkloadArgs) -> Result<()> {
    let spec: WorkloadSpec = read_json(&args.spec)?;
    let workload = generate_workload(&spec)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("events.jsonl"), events_to_jsonl(&workload.events)?)?;
    let mut requests = Vec::new();
    for r in &workload.requests {
        serde_json::to_writer(&mut requests, r)?;
        requests.push(b'\n');
    }
    fs::write(args.out.join("requests.jsonl"), requests)?;
    let mut labels = Vec::new();
    for l in &workload.labels {
        serde_json::to_writer(&mut labels, l)?;
        labels.push(b'\n');
    }
    fs::write(args.out.join("labels.jsonl"), labels)?;
    info!(
        "generated {} events, {} requests, {} labels",
        workload.events.len(),
        workload.requests.len(),
        workload.labels.len()
    );
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let events = events_from_jsonl(&fs::read(&args.events)?)?;
    let store = MutableStore::new();
    let ledger = IoLedger::new();
    let mut count = 0usize;
    for event in events {
        count += 1;
        let user = event.user_id;
        store.append(user, vec![event], &ledger);
    }
    let mut out = Vec::new();
    for (_, merged) in store.dump() {
        out.extend(events_to_jsonl(&merged)?);
    }
    fs::write(&args.out, out)?;
    info!(
        "ingested {count} events ({} bytes written to the mutable tier)",
        ledger.snapshot().mutable_write_bytes
    );
    Ok(())
}

fn cmd_compact(args: CompactArgs) -> Result<()> {
    let events = events_from_jsonl(&fs::read(&args.source)?)?;
    let groups: Vec<FeatureGroup> = read_json(&args.groups)?;
    let deletions = match &args.deletions {
        Some(path) => read_json(path)?,
        None => DeletionList::default(),
    };
    let ledger = IoLedger::new();
    let generation = compact(
        &events,
        &groups,
        &deletions,
        &CompactionConfig {
            generation_id: args.generation_id,
            as_of_ts: args.as_of,
            stripe_capacity: args.stripe_capacity,
            shard_count: args.shards,
        },
        &ledger,
    )?;
    generation.write_to_dir(&args.out)?;
    info!(
        "generation {} published to {} ({} bytes, {} stripes)",
        args.generation_id,
        args.out.display(),
        generation.total_bytes(),
        generation.manifest.entries.len()
    );
    Ok(())
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<()> {
    let events = events_from_jsonl(&fs::read(&args.events)?)?;
    let groups: Vec<FeatureGroup> = read_json(&args.groups)?;
    let tenant: TenantSpec = read_json(&args.tenant)?;
    let mutable = MutableStore::new();
    let immutable = ImmutableStore::default();
    let ledger = IoLedger::new();
    if let Some(dir) = &args.generation {
        immutable.publish(Generation::load_from_dir(dir)?)?;
    }
    let horizon = immutable.live().map(|g| g.as_of_ts()).unwrap_or(0);
    for event in events {
        if event.timestamp > horizon {
            let user = event.user_id;
            mutable.append(user, vec![event], &ledger);
        }
    }
    let stores = ProtocolStores {
        mutable: &mutable,
        immutable: &immutable,
        groups: &groups,
    };
    let request = RankingRequest {
        request_id: 0,
        user_id: args.user,
        request_ts: args.ts,
    };
    let snapshot = snapshot_at_inference(&stores, &request, &tenant, &ledger)?;
    let doc = serde_json::json!({
        "request": snapshot.request,
        "mutable_snapshot": snapshot.mutable_snapshot,
        "version_metadata": snapshot.version_metadata,
        "full_sequence": snapshot.full_sequence,
        "full_sequence_bytes": serialized_size(&snapshot.full_sequence),
        "mutable_snapshot_bytes": serialized_size(&snapshot.mutable_snapshot),
        "metadata_bytes": ledger.snapshot().metadata_bytes,
    });
    match &args.out {
        Some(path) => write_json(path, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(())
}

fn cmd_train_sim(args: TrainSimArgs) -> Result<()> {
    let mut config: ScenarioConfig = read_json(&args.scenario)?;
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(depth) = args.prefetch_depth {
        config.prefetch_depth = depth;
    }
    if let Some(shards) = args.shards {
        config.shard_count = shards;
    }
    if args.bucket_by_user {
        config.bucket_by_user = true;
    }
    if let Some(path) = &args.tenant {
        let tenant: TenantSpec = read_json(path)?;
        config.tenants = vec![tenant];
    } else {
        config.tenants.truncate(1);
    }
    let state = build_scenario(config)?;
    let bucket = &state.per_tenant[0];
    let examples = match args.paradigm {
        Paradigm::FatRow => &bucket.fatrow,
        Paradigm::LateMat => &bucket.latemat,
    };
    let pipeline_cfg = seqstore::pipeline::PipelineConfig {
        mode: state.config.mode,
        paradigm: args.paradigm,
        prefetch_depth: state.config.prefetch_depth,
        latency: state.config.latency,
        shard_map: seqstore::pipeline::ShardMap {
            shard_count: state.config.shard_count,
        },
        symmetric_sharding: state.config.symmetric_sharding.unwrap_or(true),
        bucket_by_user: state.config.bucket_by_user,
        error_policy: state
            .config
            .error_policy
            .unwrap_or_else(|| ErrorPolicy::default_for(state.config.mode)),
        reshuffle_seed: state.config.workload.rng_seed,
        gpu_batch_time_ms: state.config.gpu_batch_time_ms,
        collect_scan_traces: state.config.collect_scan_traces,
    };
    let ledger = IoLedger::new();
    let (batches, stats) = run_pipeline(
        examples,
        &bucket.tenant,
        &state.config.feature_groups,
        &state.immutable,
        &pipeline_cfg,
        &ledger,
    )?;
    info!(
        "processed {} examples in {} model batches, simulated {} us",
        stats.examples_processed,
        batches.len(),
        stats.simulated_us
    );
    write_json(&args.stats_out, &stats)?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let config: ScenarioConfig = read_json(&args.scenario)?;
    let state = build_scenario(config)?;
    let summary = verify_scenario(&state)?;
    match &args.out {
        Some(path) => write_json(path, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    if summary.is_clean() {
        Ok(())
    } else {
        Err(SeqStoreError::O2OViolation {
            detail: format!(
                "{} O2O failures, {} fat-row mismatches, {} oracle mismatches, {} leakage failures over {} examples",
                summary.o2o_failures,
                summary.fatrow_mismatches,
                summary.oracle_mismatches,
                summary.leakage_failures,
                summary.examples_checked
            ),
        })
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let fatrow: seqstore::metrics::LedgerSnapshot = read_json(&args.fatrow_stats)?;
    let latemat: seqstore::metrics::LedgerSnapshot = read_json(&args.latemat_stats)?;
    let config: ScenarioConfig = read_json(&args.workload)?;
    let state = build_scenario(config)?;
    let (_, _, per_tenant_lookup, per_tenant_primary) = run_training(&state)?;
    let report = seqstore::metrics::amplification_report(
        &fatrow,
        &latemat,
        &analytic_inputs(&state),
        per_tenant_lookup,
        per_tenant_primary,
    )?;
    write_json(&args.out, &report)?;
    Ok(())
}

fn cmd_scenario(args: ScenarioArgs) -> Result<()> {
    let config: ScenarioConfig = read_json(&args.config)?;
    fs::create_dir_all(&args.out)?;

    // examples are an artifact of the run, so rebuild the state for the
    // example dump, then produce the aggregate report from the same config
    let state = build_scenario(config.clone())?;
    for bucket in &state.per_tenant {
        write_examples_jsonl(
            &args.out.join(format!("examples_{}_latemat.jsonl", bucket.tenant.tenant_name)),
            &bucket.latemat,
        )?;
        write_examples_jsonl(
            &args.out.join(format!("examples_{}_fatrow.jsonl", bucket.tenant.tenant_name)),
            &bucket.fatrow,
        )?;
    }
    write_json(&args.out.join("fatrow_ledger.json"), &state.fatrow_ledger.snapshot())?;
    write_json(&args.out.join("latemat_ledger.json"), &state.latemat_ledger.snapshot())?;

    let report = run_scenario(config)?;
    write_json(&args.out.join("verification.json"), &report.verification)?;
    write_json(&args.out.join("report.json"), &report)?;

    if !report.verification.is_clean() {
        return Err(SeqStoreError::O2OViolation {
            detail: format!("verification failed: {:?}", report.verification),
        });
    }
    info!(
        "scenario complete: {} examples per paradigm, {} generations, verification clean",
        report.examples_per_paradigm, report.generations_published
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorkload(args) => cmd_gen_workload(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Compact(args) => cmd_compact(args),
        Command::Snapshot(args) => cmd_snapshot(args),
        Command::TrainSim(args) => cmd_train_sim(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Report(args) => cmd_report(args),
        Command::Scenario(args) => cmd_scenario(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEQSTORE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let doc = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{doc}");
            match err.kind() {
                "config" | "json" => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
