//! Fixed-capacity columnar stripes and their on-disk file format.
//!
//! File layout, little-endian throughout:
//! - header: magic `UIHS`, format version u16, stripe_capacity u32
//! - per stripe: user_id u64, group name (u16 length + UTF-8),
//!   subsequence_timestamp u64, event_count u32, min_ts u64, max_ts u64,
//!   column count u16, then per column: name (u16 length + UTF-8),
//!   encoding tag u8, payload length u32, payload bytes.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{
    Event, EventType, TraitValue, TRAIT_EVENT_ID, TRAIT_EVENT_TYPE, TRAIT_ITEM_ID, TRAIT_TIMESTAMP,
};
use crate::encoding::{decode_column, encode_column, EncodedColumn, Encoding};
use crate::error::{Result, SeqStoreError};

pub const STRIPE_MAGIC: &[u8; 4] = b"UIHS";
pub const STRIPE_FORMAT_VERSION: u16 = 1;
pub const DEFAULT_STRIPE_CAPACITY: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StripeKey {
    pub user_id: u64,
    pub feature_group: String,
    pub subsequence_timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stripe {
    pub key: StripeKey,
    pub event_count: u32,
    pub min_ts: u64,
    pub max_ts: u64,
    pub columns: Vec<EncodedColumn>,
}

fn to_i64(value: u64, what: &str) -> Result<i64> {
    i64::try_from(value)
        .map_err(|_| SeqStoreError::Encoding(format!("{what} {value} exceeds the i64 range")))
}

/// Encode one stripe from canonically sorted events of a single (user, group).
pub fn build_stripe(group: &str, events: &[Event]) -> Result<Stripe> {
    let first = events
        .first()
        .ok_or_else(|| SeqStoreError::Encoding("cannot build an empty stripe".into()))?;
    let user_id = first.user_id;

    let mut columns = Vec::new();
    let dense = |f: &dyn Fn(&Event) -> Result<TraitValue>| -> Result<Vec<Option<TraitValue>>> {
        events.iter().map(|e| f(e).map(Some)).collect()
    };
    columns.push(encode_column(
        TRAIT_TIMESTAMP,
        &dense(&|e| to_i64(e.timestamp, "timestamp").map(TraitValue::I64))?,
    )?);
    columns.push(encode_column(
        TRAIT_EVENT_ID,
        &dense(&|e| to_i64(e.event_id, "event_id").map(TraitValue::I64))?,
    )?);
    columns.push(encode_column(
        TRAIT_ITEM_ID,
        &dense(&|e| to_i64(e.item_id, "item_id").map(TraitValue::I64))?,
    )?);
    columns.push(encode_column(
        TRAIT_EVENT_TYPE,
        &dense(&|e| Ok(TraitValue::Str(e.event_type.as_str().to_owned())))?,
    )?);

    let mut sparse_names: BTreeSet<&str> = BTreeSet::new();
    for e in events {
        for name in e.traits.keys() {
            sparse_names.insert(name);
        }
    }
    for name in sparse_names {
        let values: Vec<Option<TraitValue>> = events
            .iter()
            .map(|e| e.traits.get(name).cloned())
            .collect();
        columns.push(encode_column(name, &values)?);
    }

    Ok(Stripe {
        key: StripeKey {
            user_id,
            feature_group: group.to_owned(),
            subsequence_timestamp: first.timestamp,
        },
        event_count: events.len() as u32,
        min_ts: first.timestamp,
        max_ts: events.last().unwrap().timestamp,
        columns,
    })
}

/// Decode the stripe back into events, materializing only `required_traits`
/// beyond the identity columns. Returns the events and the number of encoded
/// payload bytes that had to be read.
pub fn decode_stripe(stripe: &Stripe, required_traits: &BTreeSet<String>) -> Result<(Vec<Event>, u64)> {
    let count = stripe.event_count as usize;
    let mut bytes_read = 0u64;
    let mut decoded: BTreeMap<&str, Vec<Option<TraitValue>>> = BTreeMap::new();
    for col in &stripe.columns {
        let name = col.trait_name.as_str();
        let needed = matches!(name, TRAIT_TIMESTAMP | TRAIT_EVENT_ID)
            || required_traits.contains(name);
        if !needed {
            continue;
        }
        bytes_read += col.payload.len() as u64;
        let values = decode_column(col, count)?;
        if values.len() != count {
            return Err(SeqStoreError::Decode(format!(
                "column {name:?} decoded {} values, expected {count}",
                values.len()
            )));
        }
        decoded.insert(name, values);
    }

    let get_u64 = |name: &str, idx: usize| -> Result<u64> {
        match decoded.get(name).and_then(|v| v.get(idx)) {
            Some(Some(TraitValue::I64(v))) if *v >= 0 => Ok(*v as u64),
            _ => Err(SeqStoreError::Decode(format!(
                "missing or invalid {name} value at row {idx}"
            ))),
        }
    };

    let mut events = Vec::with_capacity(count);
    for idx in 0..count {
        let event_type = if let Some(values) = decoded.get(TRAIT_EVENT_TYPE) {
            match values.get(idx) {
                Some(Some(TraitValue::Str(s))) => EventType::from_str_name(s).ok_or_else(|| {
                    SeqStoreError::Decode(format!("unknown event type {s:?}"))
                })?,
                _ => {
                    return Err(SeqStoreError::Decode(format!(
                        "missing event_type value at row {idx}"
                    )))
                }
            }
        } else {
            EventType::View
        };
        let mut traits = BTreeMap::new();
        for (name, values) in &decoded {
            if matches!(
                *name,
                TRAIT_TIMESTAMP | TRAIT_EVENT_ID | TRAIT_ITEM_ID | TRAIT_EVENT_TYPE
            ) {
                continue;
            }
            if let Some(Some(value)) = values.get(idx) {
                traits.insert((*name).to_owned(), value.clone());
            }
        }
        events.push(Event {
            user_id: stripe.key.user_id,
            event_id: get_u64(TRAIT_EVENT_ID, idx)?,
            timestamp: get_u64(TRAIT_TIMESTAMP, idx)?,
            item_id: if decoded.contains_key(TRAIT_ITEM_ID) {
                get_u64(TRAIT_ITEM_ID, idx)?
            } else {
                0
            },
            event_type,
            traits,
        });
    }
    Ok((events, bytes_read))
}

fn write_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| SeqStoreError::Encoding(format!("name {s:?} too long")))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn write_stripe_record(buf: &mut Vec<u8>, stripe: &Stripe) -> Result<()> {
    buf.extend_from_slice(&stripe.key.user_id.to_le_bytes());
    write_str(buf, &stripe.key.feature_group)?;
    buf.extend_from_slice(&stripe.key.subsequence_timestamp.to_le_bytes());
    buf.extend_from_slice(&stripe.event_count.to_le_bytes());
    buf.extend_from_slice(&stripe.min_ts.to_le_bytes());
    buf.extend_from_slice(&stripe.max_ts.to_le_bytes());
    let col_count = u16::try_from(stripe.columns.len())
        .map_err(|_| SeqStoreError::Encoding("too many columns".into()))?;
    buf.extend_from_slice(&col_count.to_le_bytes());
    for col in &stripe.columns {
        write_str(buf, &col.trait_name)?;
        buf.push(col.encoding.tag());
        let len = u32::try_from(col.payload.len())
            .map_err(|_| SeqStoreError::Encoding("column payload too large".into()))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(&col.payload);
    }
    Ok(())
}

pub struct StripeFileHeader {
    pub format_version: u16,
    pub stripe_capacity: u32,
}

pub fn write_file_header(buf: &mut Vec<u8>, stripe_capacity: u32) {
    buf.extend_from_slice(STRIPE_MAGIC);
    buf.extend_from_slice(&STRIPE_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&stripe_capacity.to_le_bytes());
}

pub const FILE_HEADER_LEN: usize = 4 + 2 + 4;

struct Reader<'a> {
    buf: &'a [u8],
    cursor: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .cursor
            .checked_add(n)
            .ok_or_else(|| SeqStoreError::Decode("stripe file offset overflow".into()))?;
        let slice = self
            .buf
            .get(self.cursor..end)
            .ok_or_else(|| SeqStoreError::Decode("stripe file truncated".into()))?;
        self.cursor = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| SeqStoreError::Decode("invalid UTF-8 name".into()))
    }
}

pub fn read_file_header(buf: &[u8]) -> Result<StripeFileHeader> {
    let mut r = Reader { buf, cursor: 0 };
    if r.take(4)? != STRIPE_MAGIC {
        return Err(SeqStoreError::Decode("bad stripe file magic".into()));
    }
    let format_version = r.u16()?;
    if format_version != STRIPE_FORMAT_VERSION {
        return Err(SeqStoreError::Decode(format!(
            "unsupported stripe format version {format_version}"
        )));
    }
    let stripe_capacity = r.u32()?;
    if stripe_capacity == 0 {
        return Err(SeqStoreError::Decode("stripe capacity of zero".into()));
    }
    Ok(StripeFileHeader {
        format_version,
        stripe_capacity,
    })
}

fn read_stripe_record(r: &mut Reader) -> Result<Stripe> {
    let user_id = r.u64()?;
    let feature_group = r.str()?;
    let subsequence_timestamp = r.u64()?;
    let event_count = r.u32()?;
    if event_count == 0 {
        return Err(SeqStoreError::Decode("stripe with zero events".into()));
    }
    let min_ts = r.u64()?;
    let max_ts = r.u64()?;
    if min_ts > max_ts || min_ts != subsequence_timestamp {
        return Err(SeqStoreError::Decode("inconsistent stripe time bounds".into()));
    }
    let col_count = r.u16()?;
    let mut columns = Vec::with_capacity(col_count.min(64) as usize);
    for _ in 0..col_count {
        let trait_name = r.str()?;
        let encoding = Encoding::from_tag(r.u8()?)?;
        let payload_len = r.u32()? as usize;
        let payload = r.take(payload_len)?.to_vec();
        columns.push(EncodedColumn {
            trait_name,
            encoding,
            payload,
        });
    }
    Ok(Stripe {
        key: StripeKey {
            user_id,
            feature_group,
            subsequence_timestamp,
        },
        event_count,
        min_ts,
        max_ts,
        columns,
    })
}

/// Parse a whole stripe file: header plus every stripe record with its byte
/// range. The record offsets are what the manifest stores.
pub fn read_stripe_file(buf: &[u8]) -> Result<(StripeFileHeader, Vec<(Stripe, u64, u64)>)> {
    let header = read_file_header(buf)?;
    let mut r = Reader {
        buf,
        cursor: FILE_HEADER_LEN,
    };
    let mut stripes = Vec::new();
    while r.cursor < buf.len() {
        let start = r.cursor as u64;
        let stripe = read_stripe_record(&mut r)?;
        if stripe.event_count > header.stripe_capacity {
            return Err(SeqStoreError::Decode("stripe exceeds file capacity".into()));
        }
        stripes.push((stripe, start, r.cursor as u64 - start));
    }
    Ok((header, stripes))
}

/// Parse one stripe record at a manifest-provided byte range.
pub fn read_stripe_at(buf: &[u8], offset: u64, length: u64) -> Result<Stripe> {
    let start = usize::try_from(offset)
        .map_err(|_| SeqStoreError::Decode("stripe offset overflow".into()))?;
    let end = start
        .checked_add(usize::try_from(length).map_err(|_| {
            SeqStoreError::Decode("stripe length overflow".into())
        })?)
        .ok_or_else(|| SeqStoreError::Decode("stripe range overflow".into()))?;
    let slice = buf
        .get(start..end)
        .ok_or_else(|| SeqStoreError::Decode("stripe range out of bounds".into()))?;
    let mut r = Reader {
        buf: slice,
        cursor: 0,
    };
    let stripe = read_stripe_record(&mut r)?;
    if r.cursor != slice.len() {
        return Err(SeqStoreError::Decode("trailing bytes after stripe".into()));
    }
    Ok(stripe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::canonical_sort;

    fn event(ts: u64, id: u64, ty: EventType) -> Event {
        let mut traits = BTreeMap::new();
        if ty == EventType::VideoWatch {
            traits.insert("watch_time_ms".to_owned(), TraitValue::I64(1234));
        }
        Event {
            user_id: 7,
            event_id: id,
            timestamp: ts,
            item_id: 100 + id,
            event_type: ty,
            traits,
        }
    }

    fn sample_events() -> Vec<Event> {
        canonical_sort(vec![
            event(10, 1, EventType::View),
            event(20, 2, EventType::VideoWatch),
            event(30, 3, EventType::Like),
        ])
        .unwrap()
    }

    fn all_traits() -> BTreeSet<String> {
        ["item_id", "event_type", "watch_time_ms"]
            .iter()
            .map(|s| (*s).to_owned())
            .collect()
    }

    #[test]
    fn stripe_roundtrip_full_projection() {
        let events = sample_events();
        let stripe = build_stripe("g", &events).unwrap();
        assert_eq!(stripe.key.subsequence_timestamp, 10);
        assert_eq!(stripe.min_ts, 10);
        assert_eq!(stripe.max_ts, 30);
        let (decoded, _) = decode_stripe(&stripe, &all_traits()).unwrap();
        assert_eq!(decoded, events);
    }

    #[test]
    fn selective_decoding_skips_column_bytes() {
        let events = sample_events();
        let stripe = build_stripe("g", &events).unwrap();
        let (_, full_bytes) = decode_stripe(&stripe, &all_traits()).unwrap();
        let narrow: BTreeSet<String> = std::iter::once("item_id".to_owned()).collect();
        let (decoded, narrow_bytes) = decode_stripe(&stripe, &narrow).unwrap();
        assert!(narrow_bytes < full_bytes);
        assert!(decoded.iter().all(|e| e.traits.is_empty()));
        assert_eq!(
            decoded.iter().map(|e| e.sort_key()).collect::<Vec<_>>(),
            events.iter().map(|e| e.sort_key()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn file_roundtrip() {
        let events = sample_events();
        let stripe = build_stripe("g", &events).unwrap();
        let mut buf = Vec::new();
        write_file_header(&mut buf, DEFAULT_STRIPE_CAPACITY);
        write_stripe_record(&mut buf, &stripe).unwrap();
        let (header, stripes) = read_stripe_file(&buf).unwrap();
        assert_eq!(header.stripe_capacity, DEFAULT_STRIPE_CAPACITY);
        assert_eq!(stripes.len(), 1);
        assert_eq!(stripes[0].0, stripe);
        let again = read_stripe_at(&buf, stripes[0].1, stripes[0].2).unwrap();
        assert_eq!(again, stripe);
    }

    #[test]
    fn corrupted_file_errors_cleanly() {
        let events = sample_events();
        let stripe = build_stripe("g", &events).unwrap();
        let mut buf = Vec::new();
        write_file_header(&mut buf, DEFAULT_STRIPE_CAPACITY);
        write_stripe_record(&mut buf, &stripe).unwrap();
        for cut in [0, 3, FILE_HEADER_LEN - 1, buf.len() - 1] {
            assert!(read_stripe_file(&buf[..cut]).is_err());
        }
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_stripe_file(&bad_magic).is_err());
    }
}
