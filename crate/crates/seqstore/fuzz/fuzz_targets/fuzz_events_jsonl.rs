#![no_main]

use libfuzzer_sys::fuzz_target;
use seqstore::domain::{events_from_jsonl, events_to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(events) = events_from_jsonl(data) else {
        return;
    };
    // accepted input must roundtrip through the writer
    let encoded = events_to_jsonl(&events).expect("valid events must serialize");
    let again = events_from_jsonl(&encoded).expect("writer output must parse");
    assert_eq!(again, events);
});
