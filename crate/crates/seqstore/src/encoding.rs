//! Trait-aware columnar encoding for stripe columns.
//!
//! Four encodings, chosen from the value profile:
//! - `DeltaVarint` for dense monotone integers (timestamps),
//! - `PresenceBitmap` for sparse columns (<50% present),
//! - `Dictionary` for dense low-cardinality columns (<=256 distinct),
//! - `Plain` otherwise.
//!
//! Every payload starts with a type tag byte; values are little-endian,
//! strings length-prefixed with a single byte. Encodings are deterministic so
//! recompacting identical input yields byte-identical stripes.

use serde::{Deserialize, Serialize};

use crate::domain::TraitValue;
use crate::error::{Result, SeqStoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Encoding {
    DeltaVarint,
    PresenceBitmap,
    Dictionary,
    Plain,
}

impl Encoding {
    pub fn tag(&self) -> u8 {
        match self {
            Encoding::DeltaVarint => 0,
            Encoding::PresenceBitmap => 1,
            Encoding::Dictionary => 2,
            Encoding::Plain => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Encoding> {
        Ok(match tag {
            0 => Encoding::DeltaVarint,
            1 => Encoding::PresenceBitmap,
            2 => Encoding::Dictionary,
            3 => Encoding::Plain,
            other => {
                return Err(SeqStoreError::Decode(format!(
                    "unknown encoding tag {other}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedColumn {
    pub trait_name: String,
    pub encoding: Encoding,
    pub payload: Vec<u8>,
}

const TYPE_I64: u8 = 0;
const TYPE_F32: u8 = 1;
const TYPE_STR: u8 = 2;

fn type_tag(value: &TraitValue) -> u8 {
    match value {
        TraitValue::I64(_) => TYPE_I64,
        TraitValue::F32(_) => TYPE_F32,
        TraitValue::Str(_) => TYPE_STR,
    }
}

/// Byte form used both for payloads and for dictionary identity (f32 compared
/// by bit pattern).
fn write_value(buf: &mut Vec<u8>, value: &TraitValue) -> Result<()> {
    value.validate()?;
    match value {
        TraitValue::I64(v) => buf.extend_from_slice(&v.to_le_bytes()),
        TraitValue::F32(v) => buf.extend_from_slice(&v.to_bits().to_le_bytes()),
        TraitValue::Str(s) => {
            buf.push(s.len() as u8);
            buf.extend_from_slice(s.as_bytes());
        }
    }
    Ok(())
}

fn read_value(buf: &[u8], cursor: &mut usize, ty: u8) -> Result<TraitValue> {
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        let end = cursor
            .checked_add(n)
            .ok_or_else(|| SeqStoreError::Decode("value length overflow".into()))?;
        let slice = buf
            .get(*cursor..end)
            .ok_or_else(|| SeqStoreError::Decode("value payload truncated".into()))?;
        *cursor = end;
        Ok(slice)
    };
    Ok(match ty {
        TYPE_I64 => {
            let bytes: [u8; 8] = take(cursor, 8)?.try_into().unwrap();
            TraitValue::I64(i64::from_le_bytes(bytes))
        }
        TYPE_F32 => {
            let bytes: [u8; 4] = take(cursor, 4)?.try_into().unwrap();
            TraitValue::F32(f32::from_bits(u32::from_le_bytes(bytes)))
        }
        TYPE_STR => {
            let len = take(cursor, 1)?[0] as usize;
            let bytes = take(cursor, len)?;
            let s = std::str::from_utf8(bytes)
                .map_err(|_| SeqStoreError::Decode("invalid UTF-8 in string value".into()))?;
            TraitValue::Str(s.to_owned())
        }
        other => {
            return Err(SeqStoreError::Decode(format!("unknown value type tag {other}")))
        }
    })
}

fn value_identity(value: &TraitValue) -> Result<Vec<u8>> {
    let mut buf = vec![type_tag(value)];
    write_value(&mut buf, value)?;
    Ok(buf)
}

pub fn zigzag_encode(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn zigzag_decode(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub fn write_varint(buf: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            break;
        }
        buf.push(byte | 0x80);
    }
}

pub fn read_varint(buf: &[u8], cursor: &mut usize) -> Result<u64> {
    let mut value: u64 = 0;
    let mut shift = 0u32;
    loop {
        let byte = *buf
            .get(*cursor)
            .ok_or_else(|| SeqStoreError::Decode("varint truncated".into()))?;
        *cursor += 1;
        if shift >= 64 {
            return Err(SeqStoreError::Decode("varint too long".into()));
        }
        let bits = (byte & 0x7f) as u64;
        if shift == 63 && bits > 1 {
            return Err(SeqStoreError::Decode("varint overflows u64".into()));
        }
        value |= bits << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
    }
}

fn uniform_type(values: &[Option<TraitValue>]) -> Result<Option<u8>> {
    let mut ty = None;
    for v in values.iter().flatten() {
        let t = type_tag(v);
        match ty {
            None => ty = Some(t),
            Some(prev) if prev == t => {}
            Some(prev) => {
                return Err(SeqStoreError::Encoding(format!(
                    "mixed value types {prev} and {t} in one column"
                )))
            }
        }
    }
    Ok(ty)
}

/// Picks an encoding from the column's density, type, and cardinality.
pub fn choose_encoding(values: &[Option<TraitValue>]) -> Result<Encoding> {
    let ty = uniform_type(values)?;
    let present = values.iter().filter(|v| v.is_some()).count();
    let dense = present == values.len() && !values.is_empty();

    if dense && ty == Some(TYPE_I64) {
        let monotone = values
            .windows(2)
            .all(|pair| match (&pair[0], &pair[1]) {
                (Some(TraitValue::I64(a)), Some(TraitValue::I64(b))) => a <= b,
                _ => false,
            });
        if monotone {
            return Ok(Encoding::DeltaVarint);
        }
    }
    if !values.is_empty() && present * 2 <= values.len() {
        return Ok(Encoding::PresenceBitmap);
    }
    if dense && ty != Some(TYPE_F32) {
        let mut distinct = std::collections::BTreeSet::new();
        for v in values.iter().flatten() {
            distinct.insert(value_identity(v)?);
            if distinct.len() > 256 {
                break;
            }
        }
        if distinct.len() <= 256 {
            return Ok(Encoding::Dictionary);
        }
    }
    Ok(Encoding::Plain)
}

pub fn encode_column(trait_name: &str, values: &[Option<TraitValue>]) -> Result<EncodedColumn> {
    let encoding = choose_encoding(values)?;
    encode_column_as(trait_name, values, encoding)
}

pub fn encode_column_as(
    trait_name: &str,
    values: &[Option<TraitValue>],
    encoding: Encoding,
) -> Result<EncodedColumn> {
    let ty = uniform_type(values)?.unwrap_or(TYPE_I64);
    let mut payload = vec![ty];
    match encoding {
        Encoding::DeltaVarint => {
            if ty != TYPE_I64 {
                return Err(SeqStoreError::Encoding(
                    "delta-varint requires i64 values".into(),
                ));
            }
            let mut prev: i64 = 0;
            for v in values {
                let Some(TraitValue::I64(v)) = v else {
                    return Err(SeqStoreError::Encoding(
                        "delta-varint requires a dense i64 column".into(),
                    ));
                };
                let delta = v.checked_sub(prev).ok_or_else(|| {
                    SeqStoreError::Encoding("delta overflows i64".into())
                })?;
                write_varint(&mut payload, zigzag_encode(delta));
                prev = *v;
            }
        }
        Encoding::PresenceBitmap => {
            let mut bitmap = vec![0u8; values.len().div_ceil(8)];
            for (idx, v) in values.iter().enumerate() {
                if v.is_some() {
                    bitmap[idx / 8] |= 1 << (idx % 8);
                }
            }
            payload.extend_from_slice(&bitmap);
            for v in values.iter().flatten() {
                write_value(&mut payload, v)?;
            }
        }
        Encoding::Dictionary => {
            // codes in first-occurrence order keep the encoding deterministic
            let mut dict: Vec<Vec<u8>> = Vec::new();
            let mut codes: Vec<u8> = Vec::with_capacity(values.len());
            for v in values {
                let Some(v) = v else {
                    return Err(SeqStoreError::Encoding(
                        "dictionary encoding requires a dense column".into(),
                    ));
                };
                let id = value_identity(v)?;
                let code = match dict.iter().position(|entry| *entry == id) {
                    Some(pos) => pos,
                    None => {
                        dict.push(id);
                        dict.len() - 1
                    }
                };
                if code > 255 {
                    return Err(SeqStoreError::Encoding(
                        "dictionary exceeds 256 distinct values".into(),
                    ));
                }
                codes.push(code as u8);
            }
            if dict.len() > 256 {
                return Err(SeqStoreError::Encoding(
                    "dictionary exceeds 256 distinct values".into(),
                ));
            }
            payload.extend_from_slice(&(dict.len() as u16).to_le_bytes());
            for entry in &dict {
                // identity already carries the type tag at byte 0; strip it
                payload.extend_from_slice(&entry[1..]);
            }
            payload.extend_from_slice(&codes);
        }
        Encoding::Plain => {
            for v in values {
                match v {
                    Some(v) => {
                        payload.push(1);
                        write_value(&mut payload, v)?;
                    }
                    None => payload.push(0),
                }
            }
        }
    }
    Ok(EncodedColumn {
        trait_name: trait_name.to_owned(),
        encoding,
        payload,
    })
}

pub fn decode_column(column: &EncodedColumn, event_count: usize) -> Result<Vec<Option<TraitValue>>> {
    let buf = &column.payload;
    let mut cursor = 0usize;
    let ty = *buf
        .get(cursor)
        .ok_or_else(|| SeqStoreError::Decode("empty column payload".into()))?;
    cursor += 1;
    if !matches!(ty, TYPE_I64 | TYPE_F32 | TYPE_STR) {
        return Err(SeqStoreError::Decode(format!("unknown value type tag {ty}")));
    }

    let mut out = Vec::with_capacity(event_count);
    match column.encoding {
        Encoding::DeltaVarint => {
            if ty != TYPE_I64 {
                return Err(SeqStoreError::Decode(
                    "delta-varint column with non-i64 type tag".into(),
                ));
            }
            let mut prev: i64 = 0;
            for _ in 0..event_count {
                let delta = zigzag_decode(read_varint(buf, &mut cursor)?);
                prev = prev
                    .checked_add(delta)
                    .ok_or_else(|| SeqStoreError::Decode("delta sum overflows i64".into()))?;
                out.push(Some(TraitValue::I64(prev)));
            }
        }
        Encoding::PresenceBitmap => {
            let bitmap_len = event_count.div_ceil(8);
            let bitmap = buf
                .get(cursor..cursor + bitmap_len)
                .ok_or_else(|| SeqStoreError::Decode("presence bitmap truncated".into()))?
                .to_vec();
            cursor += bitmap_len;
            for idx in 0..event_count {
                if bitmap[idx / 8] & (1 << (idx % 8)) != 0 {
                    out.push(Some(read_value(buf, &mut cursor, ty)?));
                } else {
                    out.push(None);
                }
            }
        }
        Encoding::Dictionary => {
            let len_bytes = buf
                .get(cursor..cursor + 2)
                .ok_or_else(|| SeqStoreError::Decode("dictionary length truncated".into()))?;
            let dict_len = u16::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            cursor += 2;
            if dict_len > 256 {
                return Err(SeqStoreError::Decode("dictionary too large".into()));
            }
            let mut dict = Vec::with_capacity(dict_len);
            for _ in 0..dict_len {
                dict.push(read_value(buf, &mut cursor, ty)?);
            }
            for _ in 0..event_count {
                let code = *buf
                    .get(cursor)
                    .ok_or_else(|| SeqStoreError::Decode("dictionary codes truncated".into()))?
                    as usize;
                cursor += 1;
                let value = dict
                    .get(code)
                    .ok_or_else(|| SeqStoreError::Decode("dictionary code out of range".into()))?;
                out.push(Some(value.clone()));
            }
        }
        Encoding::Plain => {
            for _ in 0..event_count {
                let present = *buf
                    .get(cursor)
                    .ok_or_else(|| SeqStoreError::Decode("plain column truncated".into()))?;
                cursor += 1;
                match present {
                    0 => out.push(None),
                    1 => out.push(Some(read_value(buf, &mut cursor, ty)?)),
                    other => {
                        return Err(SeqStoreError::Decode(format!(
                            "invalid presence byte {other}"
                        )))
                    }
                }
            }
        }
    }
    if cursor != buf.len() {
        return Err(SeqStoreError::Decode(format!(
            "{} trailing byte(s) after column payload",
            buf.len() - cursor
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i64s(values: &[i64]) -> Vec<Option<TraitValue>> {
        values.iter().map(|v| Some(TraitValue::I64(*v))).collect()
    }

    #[test]
    fn delta_varint_matches_hand_deltas() {
        let col = encode_column("timestamp", &i64s(&[100, 105, 105, 110])).unwrap();
        assert_eq!(col.encoding, Encoding::DeltaVarint);
        // tag byte, then zigzag(100)=200, zigzag(5)=10, zigzag(0)=0, zigzag(5)=10
        assert_eq!(col.payload, vec![TYPE_I64, 200, 1, 10, 0, 10]);
        assert_eq!(decode_column(&col, 4).unwrap(), i64s(&[100, 105, 105, 110]));
    }

    #[test]
    fn presence_bitmap_layout() {
        let values = vec![
            None,
            Some(TraitValue::I64(7)),
            None,
            Some(TraitValue::I64(9)),
        ];
        let col = encode_column("sparse", &values).unwrap();
        assert_eq!(col.encoding, Encoding::PresenceBitmap);
        // bits 1 and 3 set, LSB = index 0
        assert_eq!(col.payload[1], 0b0000_1010);
        // two packed values follow the bitmap
        assert_eq!(col.payload.len(), 1 + 1 + 16);
        assert_eq!(decode_column(&col, 4).unwrap(), values);
    }

    #[test]
    fn dictionary_first_occurrence_order() {
        let values: Vec<_> = ["b", "a", "b", "c", "a"]
            .iter()
            .map(|s| Some(TraitValue::Str((*s).to_owned())))
            .collect();
        let col = encode_column("cat", &values).unwrap();
        assert_eq!(col.encoding, Encoding::Dictionary);
        assert_eq!(decode_column(&col, 5).unwrap(), values);
        let codes = &col.payload[col.payload.len() - 5..];
        assert_eq!(codes, &[0, 1, 0, 2, 1]);
    }

    #[test]
    fn plain_roundtrip_with_missing() {
        let values = vec![
            Some(TraitValue::F32(1.5)),
            None,
            Some(TraitValue::F32(-2.25)),
        ];
        let col = encode_column_as("f", &values, Encoding::Plain).unwrap();
        assert_eq!(decode_column(&col, 3).unwrap(), values);
    }

    #[test]
    fn non_monotone_integers_avoid_delta() {
        let col = encode_column("ids", &i64s(&[5, 3, 9])).unwrap();
        assert_ne!(col.encoding, Encoding::DeltaVarint);
        assert_eq!(decode_column(&col, 3).unwrap(), i64s(&[5, 3, 9]));
    }

    #[test]
    fn oversize_string_rejected() {
        let values = vec![Some(TraitValue::Str("x".repeat(256)))];
        assert!(encode_column("s", &values).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error_not_a_panic() {
        let mut col = encode_column("timestamp", &i64s(&[100, 105])).unwrap();
        col.payload.truncate(2);
        assert!(decode_column(&col, 2).is_err());
    }

    #[test]
    fn varint_roundtrip_extremes() {
        for v in [0u64, 1, 127, 128, u64::MAX] {
            let mut buf = Vec::new();
            write_varint(&mut buf, v);
            let mut cursor = 0;
            assert_eq!(read_varint(&buf, &mut cursor).unwrap(), v);
            assert_eq!(cursor, buf.len());
        }
        assert_eq!(zigzag_decode(zigzag_encode(i64::MIN)), i64::MIN);
        assert_eq!(zigzag_decode(zigzag_encode(i64::MAX)), i64::MAX);
    }
}
