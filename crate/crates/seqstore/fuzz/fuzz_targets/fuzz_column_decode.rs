#![no_main]

use libfuzzer_sys::fuzz_target;
use seqstore::encoding::{decode_column, encode_column_as, Encoding, EncodedColumn};

fuzz_target!(|data: &[u8]| {
    // first byte picks the claimed encoding and event count; the rest is the
    // raw column payload
    let [tag, count, payload @ ..] = data else {
        return;
    };
    let Ok(encoding) = Encoding::from_tag(tag % 4) else {
        return;
    };
    let column = EncodedColumn {
        trait_name: "f".to_owned(),
        encoding,
        payload: payload.to_vec(),
    };
    let Ok(values) = decode_column(&column, *count as usize) else {
        return;
    };
    assert_eq!(values.len(), *count as usize);
    // anything that decodes must re-encode and decode to the same values
    if let Ok(reencoded) = encode_column_as("f", &values, encoding) {
        let redecoded = decode_column(&reencoded, values.len()).expect("re-encode must decode");
        assert_eq!(redecoded.len(), values.len());
    }
});
