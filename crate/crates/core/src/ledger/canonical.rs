//! Canonical JSON used for everything that gets hashed: object keys in
//! lexicographic order, no insignificant whitespace, integers only.

use serde::Serialize;
use serde_json::Value;

use super::digest::{hash_payload, HashDigest};

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value is not serializable: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("floating-point number at {path} is not allowed in hashed content")]
    Float { path: String },
}

/// Serializes `value` into its canonical byte form.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    // serde_json's default map is a BTreeMap, so going through Value sorts keys.
    let value = serde_json::to_value(value)?;
    reject_floats(&value, "$")?;
    Ok(serde_json::to_vec(&value)?)
}

/// Digest of the canonical form.
pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> Result<HashDigest, CanonicalError> {
    Ok(hash_payload(&to_canonical_bytes(value)?))
}

fn reject_floats(value: &Value, path: &str) -> Result<(), CanonicalError> {
    match float_path(value) {
        Some(rest) => Err(CanonicalError::Float {
            path: format!("{path}{rest}"),
        }),
        None => Ok(()),
    }
}

/// Path suffix of the first float in `value`, built only when one is found.
fn float_path(value: &Value) -> Option<String> {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => Some(String::new()),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, v)| float_path(v).map(|rest| format!("[{i}]{rest}"))),
        Value::Object(map) => map
            .iter()
            .find_map(|(k, v)| float_path(v).map(|rest| format!(".{k}{rest}"))),
        _ => None,
    }
}
