//! Canonical serialization and hash-chain helpers shared by the feedback and
//! governance logs.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Hash used as `prev_*_hash` of the first entry of every chain.
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// Compact JSON with object keys sorted at every depth.
///
/// Independent of whether `serde_json` was built with `preserve_order`.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Canonical form of any serializable value.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("record types serialize to JSON");
    canonical_json(&value)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Short stable identifier derived from arbitrary content.
pub fn short_id(prefix: &str, value: &Value) -> String {
    let digest = sha256_hex(canonical_json(value).as_bytes());
    format!("{prefix}-{}", &digest[..16])
}

/// An entry in an append-only hash chain.
pub trait Chained: Serialize {
    /// Name of the field holding this entry's own hash.
    const HASH_FIELD: &'static str;

    fn prev_hash(&self) -> &str;
    fn own_hash(&self) -> &str;

    /// Hash over every field except the entry's own hash.
    fn compute_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("chain entries serialize");
        if let Value::Object(map) = &mut value {
            map.remove(Self::HASH_FIELD);
        }
        sha256_hex(canonical_json(&value).as_bytes())
    }
}

/// Outcome of verifying a chain. Tampering is a value, not an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ChainReport {
    pub valid: bool,
    pub first_bad_index: Option<usize>,
    pub entries: usize,
    pub head: String,
}

/// Recompute every hash and link in order.
pub fn verify_chain<T: Chained>(entries: &[T]) -> ChainReport {
    let mut prev = GENESIS_HASH.to_string();
    for (index, entry) in entries.iter().enumerate() {
        if entry.prev_hash() != prev || entry.compute_hash() != entry.own_hash() {
            return ChainReport {
                valid: false,
                first_bad_index: Some(index),
                entries: entries.len(),
                head: prev,
            };
        }
        prev = entry.own_hash().to_string();
    }
    ChainReport {
        valid: true,
        first_bad_index: None,
        entries: entries.len(),
        head: prev,
    }
}

/// Verify a JSONL export byte-for-byte.
///
/// A line is bad if it is not UTF-8, fails to parse, is not the canonical
/// encoding of the entry it decodes to, or if its hash or link does not
/// verify. The file must end in LF.
pub fn verify_jsonl<T: Chained + DeserializeOwned>(bytes: impl AsRef<[u8]>) -> ChainReport {
    let mut prev = GENESIS_HASH.to_string();
    let mut index = 0usize;
    let mut rest = bytes.as_ref();
    while !rest.is_empty() {
        let bad = |prev: String| ChainReport {
            valid: false,
            first_bad_index: Some(index),
            entries: index,
            head: prev,
        };
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return bad(prev);
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        let Ok(line) = std::str::from_utf8(line) else {
            return bad(prev);
        };
        let Ok(entry) = serde_json::from_str::<T>(line) else {
            return bad(prev);
        };
        if to_canonical(&entry) != line
            || entry.prev_hash() != prev
            || entry.compute_hash() != entry.own_hash()
        {
            return bad(prev);
        }
        prev = entry.own_hash().to_string();
        index += 1;
    }
    ChainReport {
        valid: true,
        first_bad_index: None,
        entries: index,
        head: prev,
    }
}

/// Serialize entries as canonical JSON lines, LF-terminated.
pub fn to_jsonl<T: Serialize>(entries: &[T]) -> String {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&to_canonical(entry));
        out.push('\n');
    }
    out
}
