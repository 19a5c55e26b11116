//! Off-chain "cloud" storage: the medicine formulary and the
//! content-addressed payload store holding full transaction details.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::ledger::{hash_payload, to_canonical_bytes, HashDigest};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StorageError {
    #[error("medicine {0:?} is already registered")]
    DuplicateName(String),
    #[error("invalid medicine spec ({field}): {reason}")]
    InvalidSpec { field: &'static str, reason: String },
}

/// Formulary entry. Temperatures are deci-degrees Celsius (25.0 °C = 250).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedicineSpec {
    pub name: String,
    /// Ingredient name to amount in milligrams.
    pub ingredients: BTreeMap<String, u64>,
    pub storage_temp_min: i64,
    pub storage_temp_max: i64,
    pub shelf_life_days: u64,
}

impl MedicineSpec {
    pub fn validate(&self) -> Result<(), StorageError> {
        let invalid = |field, reason: &str| StorageError::InvalidSpec {
            field,
            reason: reason.to_string(),
        };
        if self.name.is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.ingredients.is_empty() {
            return Err(invalid("ingredients", "at least one ingredient is required"));
        }
        if let Some((name, _)) = self.ingredients.iter().find(|(_, amount)| **amount == 0) {
            return Err(invalid(
                "ingredients",
                &format!("amount of {name:?} must be positive"),
            ));
        }
        if self.storage_temp_min >= self.storage_temp_max {
            return Err(invalid(
                "storage range",
                &format!(
                    "min {} must be below max {}",
                    self.storage_temp_min, self.storage_temp_max
                ),
            ));
        }
        if self.shelf_life_days == 0 {
            return Err(invalid("shelf_life_days", "must be positive"));
        }
        Ok(())
    }
}

/// Append-only formulary keyed by exact, case-sensitive medicine name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MedicineListStore {
    entries: BTreeMap<String, MedicineSpec>,
}

impl MedicineListStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_medicine(&mut self, spec: MedicineSpec) -> Result<(), StorageError> {
        spec.validate()?;
        if self.entries.contains_key(&spec.name) {
            return Err(StorageError::DuplicateName(spec.name));
        }
        self.entries.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get_medicine(&self, name: &str) -> Option<&MedicineSpec> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MedicineSpec> {
        self.entries.values()
    }
}

/// A stored entry whose bytes no longer hash to its key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityViolation {
    pub digest: HashDigest,
    pub actual: HashDigest,
}

/// Content-addressed blobs: every entry is keyed by the SHA-256 of its bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PayloadStore {
    entries: BTreeMap<HashDigest, Vec<u8>>,
}

impl PayloadStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent: storing identical bytes again returns the same digest.
    pub fn put_payload(&mut self, payload: &[u8]) -> HashDigest {
        let digest = hash_payload(payload);
        self.entries
            .entry(digest)
            .or_insert_with(|| payload.to_vec());
        digest
    }

    pub fn get_payload(&self, digest: &HashDigest) -> Option<&[u8]> {
        self.entries.get(digest).map(Vec::as_slice)
    }

    pub fn contains(&self, digest: &HashDigest) -> bool {
        self.entries.contains_key(digest)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digests(&self) -> impl Iterator<Item = &HashDigest> {
        self.entries.keys()
    }

    /// Removes an entry. Only fault injection uses this.
    pub fn remove(&mut self, digest: &HashDigest) -> Option<Vec<u8>> {
        self.entries.remove(digest)
    }

    /// Replaces the bytes under `digest` without re-keying, simulating
    /// out-of-band corruption of the backing store.
    pub fn overwrite_unchecked(&mut self, digest: HashDigest, bytes: Vec<u8>) {
        self.entries.insert(digest, bytes);
    }

    /// Re-hashes every entry.
    pub fn self_check(&self) -> Vec<IntegrityViolation> {
        self.entries
            .iter()
            .filter_map(|(digest, bytes)| {
                let actual = hash_payload(bytes);
                (actual != *digest).then_some(IntegrityViolation {
                    digest: *digest,
                    actual,
                })
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("payload {digest} is not valid base64")]
    Base64 { digest: HashDigest },
    #[error("payload stored under {digest} hashes to {actual}")]
    DigestMismatch {
        digest: HashDigest,
        actual: HashDigest,
    },
    #[error(transparent)]
    Medicine(#[from] StorageError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    medicines: Vec<MedicineSpec>,
    payloads: BTreeMap<HashDigest, String>,
}

/// `{"medicines": [...], "payloads": {hex-digest: base64}}` in canonical form.
pub fn write_snapshot(medicines: &MedicineListStore, payloads: &PayloadStore) -> Vec<u8> {
    let doc = SnapshotDoc {
        medicines: medicines.iter().cloned().collect(),
        payloads: payloads
            .entries
            .iter()
            .map(|(d, bytes)| (*d, B64.encode(bytes)))
            .collect(),
    };
    let mut out = to_canonical_bytes(&doc).expect("snapshot has no floats");
    out.push(b'\n');
    out
}

/// Loads a snapshot, refusing any payload whose bytes do not hash to its key.
pub fn read_snapshot(bytes: &[u8]) -> Result<(MedicineListStore, PayloadStore), SnapshotError> {
    let doc: SnapshotDoc = serde_json::from_slice(bytes)?;
    let mut medicines = MedicineListStore::new();
    for spec in doc.medicines {
        medicines.register_medicine(spec)?;
    }
    let mut payloads = PayloadStore::new();
    for (digest, text) in doc.payloads {
        let raw = B64
            .decode(text)
            .map_err(|_| SnapshotError::Base64 { digest })?;
        let actual = hash_payload(&raw);
        if actual != digest {
            return Err(SnapshotError::DigestMismatch { digest, actual });
        }
        payloads.entries.insert(digest, raw);
    }
    Ok((medicines, payloads))
}
