//! End-to-end exercises of the `seqstore` binary: artifact shapes, exit
//! codes, and the structured error contract on stderr.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seqstore::domain::{TenantSpec, WorkloadSpec};
use seqstore::scenario::default_feature_groups;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqstore"))
}

fn smoke_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/smoke.json")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "command failed: {}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn spec() -> WorkloadSpec {
    WorkloadSpec {
        num_users: 6,
        days: 3,
        requests_per_user_per_day: 1,
        events_per_user_per_day: 10,
        rng_seed: 9,
    }
}

#[test]
fn gen_workload_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    write_json(&spec_path, &spec());

    for out in ["a", "b"] {
        run_ok(bin().args(["gen-workload", "--spec"]).arg(&spec_path).arg("--out").arg(dir.path().join(out)));
    }
    for name in ["events.jsonl", "requests.jsonl", "labels.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn compact_then_snapshot_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    write_json(&spec_path, &spec());
    run_ok(bin().args(["gen-workload", "--spec"]).arg(&spec_path).arg("--out").arg(dir.path()));

    let groups_path = dir.path().join("groups.json");
    write_json(&groups_path, &default_feature_groups());
    let gen_dir = dir.path().join("gen1");
    // horizon after day 2: day-3 events stay in the mutable tier
    let as_of = 1_700_000_000_000u64 + 2 * 24 * 3600 * 1000;
    run_ok(
        bin()
            .args(["compact", "--source"])
            .arg(dir.path().join("events.jsonl"))
            .arg("--groups")
            .arg(&groups_path)
            .args(["--as-of", &as_of.to_string(), "--generation-id", "3", "--shards", "2", "--out"])
            .arg(&gen_dir),
    );
    assert!(gen_dir.join("manifest.json").exists());

    let tenant_path = dir.path().join("tenant.json");
    write_json(
        &tenant_path,
        &TenantSpec {
            tenant_name: "t".to_owned(),
            target_seq_length: [("engagement".to_owned(), 8u64), ("impressions".to_owned(), 16)]
                .into_iter()
                .collect(),
            required_traits: std::iter::once("item_id".to_owned()).collect(),
            batch_size: 8,
            base_batch_size: 4,
        },
    );
    let snap_path = dir.path().join("snapshot.json");
    let request_ts = as_of + 12 * 3600 * 1000;
    run_ok(
        bin()
            .args(["snapshot", "--events"])
            .arg(dir.path().join("events.jsonl"))
            .arg("--generation")
            .arg(&gen_dir)
            .arg("--groups")
            .arg(&groups_path)
            .arg("--tenant")
            .arg(&tenant_path)
            .args(["--user", "2", "--ts", &request_ts.to_string(), "--out"])
            .arg(&snap_path),
    );
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&snap_path).unwrap()).unwrap();
    assert_eq!(doc["version_metadata"]["generation_id"], 3);
    assert_eq!(doc["version_metadata"]["end_ts"], as_of);
    let sequence = doc["full_sequence"].as_array().unwrap();
    assert!(sequence.len() <= 8 + 16);
    for event in sequence {
        assert!(event["timestamp"].as_u64().unwrap() <= request_ts);
    }
}

#[test]
fn malformed_json_exits_2_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, b"{ not json").unwrap();
    let output = bin()
        .args(["scenario", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&output.stderr).expect("stderr must be one JSON object");
    assert_eq!(err["error"], "config");
    // message names the offending file
    assert!(err["message"].as_str().unwrap().contains("bad.json"));
}

#[test]
fn invalid_tenant_group_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config: serde_json::Value =
        serde_json::from_slice(&std::fs::read(smoke_config_path()).unwrap()).unwrap();
    let mut config = config;
    config["tenants"][0]["target_seq_length"] =
        serde_json::json!({"no_such_group": 8, "impressions": 16});
    let bad = dir.path().join("bad_group.json");
    std::fs::write(&bad, serde_json::to_vec_pretty(&config).unwrap()).unwrap();

    let output = bin()
        .args(["verify", "--scenario"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(
        err["message"].as_str().unwrap().contains("no_such_group"),
        "message must name the offending group: {err}"
    );
}

#[test]
fn nonexistent_feature_group_file_fails() {
    let output = bin()
        .args(["compact", "--source", "/nonexistent/events.jsonl"])
        .args(["--groups", "/nonexistent/groups.json"])
        .args(["--as-of", "1", "--out", "/tmp/never"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn verify_smoke_scenario_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verification.json");
    run_ok(
        bin()
            .args(["verify", "--scenario"])
            .arg(smoke_config_path())
            .arg("--out")
            .arg(&out),
    );
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["o2o_failures"], 0);
    assert!(doc["examples_checked"].as_u64().unwrap() > 0);
}

#[test]
fn train_sim_and_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let stats_path = dir.path().join("latemat_stats.json");
    run_ok(
        bin()
            .args(["train-sim", "--scenario"])
            .arg(smoke_config_path())
            .args(["--paradigm", "latemat", "--stats-out"])
            .arg(&stats_path),
    );
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&stats_path).unwrap()).unwrap();
    assert_eq!(stats["examples_processed"], 240); // 24 users x 5 days x 2
    assert_eq!(stats["examples_dropped"], 0);

    let scenario_out = dir.path().join("scenario_out");
    run_ok(
        bin()
            .args(["scenario", "--config"])
            .arg(smoke_config_path())
            .arg("--out")
            .arg(&scenario_out),
    );
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .args(["report", "--fatrow-stats"])
            .arg(scenario_out.join("fatrow_ledger.json"))
            .arg("--latemat-stats")
            .arg(scenario_out.join("latemat_ledger.json"))
            .arg("--workload")
            .arg(smoke_config_path())
            .arg("--out")
            .arg(&report_path),
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert!(report["measured_write_ratio"].as_f64().unwrap() > 1.0);
    assert!(report["relative_error"].as_f64().unwrap() <= 0.10);
}

#[test]
fn seqstore_log_env_var_controls_logging() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_ok(
        bin()
            .env("SEQSTORE_LOG", "debug")
            .args(["scenario", "--config"])
            .arg(smoke_config_path())
            .arg("--out")
            .arg(dir.path().join("out")),
    );
    assert!(String::from_utf8_lossy(&output.stderr).contains("scenario complete"));

    let quiet = run_ok(
        bin()
            .env("SEQSTORE_LOG", "off")
            .args(["verify", "--scenario"])
            .arg(smoke_config_path()),
    );
    assert!(quiet.stderr.is_empty());
}

#[test]
fn ingest_dedupes_redelivered_events() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    write_json(&spec_path, &spec());
    run_ok(bin().args(["gen-workload", "--spec"]).arg(&spec_path).arg("--out").arg(dir.path()));

    // double-deliver the whole log; the merged view must dedupe first-wins
    let events = std::fs::read(dir.path().join("events.jsonl")).unwrap();
    let doubled_path = dir.path().join("doubled.jsonl");
    let mut doubled = events.clone();
    doubled.extend_from_slice(&events);
    std::fs::write(&doubled_path, &doubled).unwrap();

    let merged_once = dir.path().join("merged_once.jsonl");
    let merged_twice = dir.path().join("merged_twice.jsonl");
    run_ok(bin().args(["ingest", "--events"]).arg(dir.path().join("events.jsonl")).arg("--out").arg(&merged_once));
    run_ok(bin().args(["ingest", "--events"]).arg(&doubled_path).arg("--out").arg(&merged_twice));
    assert_eq!(
        std::fs::read(&merged_once).unwrap(),
        std::fs::read(&merged_twice).unwrap()
    );
}
