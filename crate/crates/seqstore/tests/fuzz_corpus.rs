//! Feeds the checked-in fuzz corpus seeds through the same entry points the
//! fuzz targets exercise, so the seeds cannot rot.

use std::collections::BTreeSet;
use std::path::PathBuf;

use seqstore::domain::{events_from_jsonl, events_to_jsonl, validate_feature_groups, WorkloadSpec};
use seqstore::encoding::{decode_column, EncodedColumn, Encoding};
use seqstore::scenario::ScenarioConfig;
use seqstore::stripe::{decode_stripe, read_stripe_at, read_stripe_file};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut seeds: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("missing corpus dir {}: {e}", dir.display()))
        .map(|entry| {
            let entry = entry.unwrap();
            (
                entry.file_name().into_string().unwrap(),
                std::fs::read(entry.path()).unwrap(),
            )
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "empty corpus for {target}");
    seeds
}

#[test]
fn stripe_file_seeds_parse_and_decode() {
    let traits: BTreeSet<String> = ["item_id", "event_type", "watch_time_ms", "share_target"]
        .iter()
        .map(|s| (*s).to_owned())
        .collect();
    for (name, data) in corpus("fuzz_stripe_file") {
        let (header, stripes) = read_stripe_file(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(header.stripe_capacity >= 1);
        assert!(!stripes.is_empty(), "{name} holds no stripes");
        for (stripe, offset, length) in stripes {
            assert_eq!(read_stripe_at(&data, offset, length).unwrap(), stripe);
            let (events, _) = decode_stripe(&stripe, &traits).unwrap();
            assert_eq!(events.len(), stripe.event_count as usize);
        }
    }
}

#[test]
fn column_seeds_decode() {
    for (name, data) in corpus("fuzz_column_decode") {
        let [tag, count, payload @ ..] = data.as_slice() else {
            panic!("{name} is too short");
        };
        let column = EncodedColumn {
            trait_name: "f".to_owned(),
            encoding: Encoding::from_tag(*tag).unwrap(),
            payload: payload.to_vec(),
        };
        let values = decode_column(&column, *count as usize).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(values.len(), *count as usize);
    }
}

#[test]
fn jsonl_seeds_roundtrip() {
    for (name, data) in corpus("fuzz_events_jsonl") {
        let events = events_from_jsonl(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!events.is_empty());
        assert_eq!(events_from_jsonl(&events_to_jsonl(&events).unwrap()).unwrap(), events);
    }
}

#[test]
fn config_seeds_parse() {
    let mut parsed = 0;
    for (name, data) in corpus("fuzz_config") {
        if let Ok(config) = serde_json::from_slice::<ScenarioConfig>(&data) {
            validate_feature_groups(&config.feature_groups).unwrap();
            parsed += 1;
        } else {
            let spec: WorkloadSpec =
                serde_json::from_slice(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
            spec.validate().unwrap();
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}
