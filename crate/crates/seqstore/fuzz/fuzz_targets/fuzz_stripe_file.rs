#![no_main]

use libfuzzer_sys::fuzz_target;
use seqstore::stripe::{decode_stripe, read_stripe_at, read_stripe_file};

fuzz_target!(|data: &[u8]| {
    let Ok((header, stripes)) = read_stripe_file(data) else {
        return;
    };
    assert!(header.stripe_capacity >= 1);
    let traits = ["item_id", "event_type", "watch_time_ms", "share_target"]
        .iter()
        .map(|s| (*s).to_owned())
        .collect();
    for (stripe, offset, length) in stripes {
        // the recorded byte range must re-parse to the same stripe
        let again = read_stripe_at(data, offset, length).expect("recorded range must parse");
        assert_eq!(again, stripe);
        if let Ok((events, _)) = decode_stripe(&stripe, &traits) {
            assert_eq!(events.len(), stripe.event_count as usize);
        }
    }
});
