//! Node key material, hybrid public-key encryption, and signatures.
//!
//! Every node holds one seed-derived [`KeyPair`] carrying two keys: an
//! Ed25519 key that signs transaction digests and an X25519 key that receives
//! encrypted payloads. Directed payloads are sealed with an ephemeral X25519
//! exchange wrapping a ChaCha20-Poly1305 session key, so payload size is not
//! bounded by the asymmetric primitive.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use x25519_dalek::StaticSecret;

use crate::ledger::{hash_payload, HashDigest};
use crate::overlay::NodeId;

pub const PUBLIC_KEY_LEN: usize = 64;
pub const SIGNATURE_LEN: usize = 64;

const EPHEMERAL_LEN: usize = 32;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("decryption failed")]
    DecryptFailure,
    #[error("envelope signature does not verify for {0}")]
    BadSignature(NodeId),
    #[error("envelope payload does not match its digest")]
    DigestMismatch,
    #[error("no public key registered for {0}")]
    UnknownKey(NodeId),
    #[error("envelope is addressed to {expected}, not {actual}")]
    WrongRecipient { expected: String, actual: NodeId },
    #[error("malformed public key: {0}")]
    MalformedKey(String),
}

/// Public half: Ed25519 verifying key followed by the X25519 exchange key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey {
    verifying: [u8; 32],
    exchange: [u8; 32],
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out[..32].copy_from_slice(&self.verifying);
        out[32..].copy_from_slice(&self.exchange);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_KEY_LEN {
            return Err(CryptoError::MalformedKey(format!(
                "expected {PUBLIC_KEY_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let mut verifying = [0u8; 32];
        let mut exchange = [0u8; 32];
        verifying.copy_from_slice(&bytes[..32]);
        exchange.copy_from_slice(&bytes[32..]);
        VerifyingKey::from_bytes(&verifying)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        Ok(Self {
            verifying,
            exchange,
        })
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
        let bytes = B64
            .decode(text)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", hex::encode(&self.verifying[..6]))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone)]
pub struct PrivateKey {
    signing: SigningKey,
    exchange: StaticSecret,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
    pub owner: NodeId,
    #[cfg_attr(not(feature = "fixture-keys"), allow(dead_code))]
    seed: [u8; 32],
}

impl KeyPair {
    /// Hex of the generating seed. Only compiled for test fixtures.
    #[cfg(feature = "fixture-keys")]
    pub fn export_seed_hex(&self) -> String {
        hex::encode(self.seed)
    }
}

fn derive(label: &[u8], seed: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label);
    h.update(seed);
    h.finalize().into()
}

/// Same seed, same key pair.
pub fn generate_keypair(seed: [u8; 32], owner: NodeId) -> KeyPair {
    let signing = SigningKey::from_bytes(&derive(b"pharmachain/sign", &seed));
    let exchange = StaticSecret::from(derive(b"pharmachain/exchange", &seed));
    let public = PublicKey {
        verifying: signing.verifying_key().to_bytes(),
        exchange: x25519_dalek::PublicKey::from(&exchange).to_bytes(),
    };
    KeyPair {
        public,
        private: PrivateKey { signing, exchange },
        owner,
        seed,
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Signature(Vec<u8>);

impl Signature {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..self.0.len().min(6)]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("signature hex must be lowercase"));
        }
        hex::decode(&s)
            .map(Signature)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext(Vec<u8>);

impl Ciphertext {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.0.len())
    }
}

fn session_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"pharmachain/session");
    h.update(shared);
    h.update(ephemeral);
    h.update(recipient);
    h.finalize().into()
}

/// Randomized: the same plaintext encrypts differently on every call.
pub fn encrypt<R: RngCore + CryptoRng>(
    recipient: &PublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let mut eph_bytes = [0u8; 32];
    rng.fill_bytes(&mut eph_bytes);
    let ephemeral = StaticSecret::from(eph_bytes);
    let eph_public = x25519_dalek::PublicKey::from(&ephemeral).to_bytes();
    let shared = ephemeral
        .diffie_hellman(&x25519_dalek::PublicKey::from(recipient.exchange))
        .to_bytes();
    let key = session_key(&shared, &eph_public, &recipient.exchange);

    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let sealed = ChaCha20Poly1305::new(Key::from_slice(&key))
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("in-memory AEAD encryption does not fail");

    let mut out = Vec::with_capacity(EPHEMERAL_LEN + NONCE_LEN + sealed.len());
    out.extend_from_slice(&eph_public);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    Ciphertext(out)
}

pub fn decrypt(recipient: &PrivateKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    let bytes = ciphertext.as_bytes();
    if bytes.len() < EPHEMERAL_LEN + NONCE_LEN + TAG_LEN {
        return Err(CryptoError::DecryptFailure);
    }
    let (eph, rest) = bytes.split_at(EPHEMERAL_LEN);
    let (nonce, sealed) = rest.split_at(NONCE_LEN);
    let eph: [u8; 32] = eph.try_into().expect("split length");
    let shared = recipient
        .exchange
        .diffie_hellman(&x25519_dalek::PublicKey::from(eph))
        .to_bytes();
    let own_public = x25519_dalek::PublicKey::from(&recipient.exchange).to_bytes();
    let key = session_key(&shared, &eph, &own_public);
    ChaCha20Poly1305::new(Key::from_slice(&key))
        .decrypt(Nonce::from_slice(nonce), sealed)
        .map_err(|_| CryptoError::DecryptFailure)
}

pub fn sign(private: &PrivateKey, message: &[u8]) -> Signature {
    Signature(private.signing.sign(message).to_bytes().to_vec())
}

/// Malformed keys or signatures verify as `false`.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(sig_bytes) = <[u8; SIGNATURE_LEN]>::try_from(signature.as_bytes()) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&public.verifying) else {
        return false;
    };
    key.verify(message, &ed25519_dalek::Signature::from_bytes(&sig_bytes))
        .is_ok()
}

/// Public keys of every scenario node, distributed at setup.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyDirectory(BTreeMap<NodeId, PublicKey>);

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, key: PublicKey) -> Option<PublicKey> {
        self.0.insert(node, key)
    }

    pub fn remove(&mut self, node: &NodeId) -> Option<PublicKey> {
        self.0.remove(node)
    }

    pub fn get(&self, node: &NodeId) -> Option<&PublicKey> {
        self.0.get(node)
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.0.contains_key(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &PublicKey)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("directory serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

impl FromIterator<(NodeId, PublicKey)> for KeyDirectory {
    fn from_iter<I: IntoIterator<Item = (NodeId, PublicKey)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipient {
    Node(NodeId),
    Broadcast,
}

/// What an envelope carries; only used for routing and delivery logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Order,
    Transaction,
    BlockAnnounce,
    Notice,
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Topic::Order => "order",
            Topic::Transaction => "transaction",
            Topic::BlockAnnounce => "block_announce",
            Topic::Notice => "notice",
        };
        f.write_str(name)
    }
}

/// A signed message between nodes. Directed envelopes carry ciphertext for
/// the recipient; broadcasts carry plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedEnvelope {
    pub sender: NodeId,
    pub recipient: Recipient,
    pub topic: Topic,
    pub ciphertext: Vec<u8>,
    pub payload_digest: HashDigest,
    pub signature: Signature,
}

impl SignedEnvelope {
    pub fn directed<R: RngCore + CryptoRng>(
        sender: &KeyPair,
        recipient: &NodeId,
        recipient_key: &PublicKey,
        topic: Topic,
        payload: &[u8],
        rng: &mut R,
    ) -> Self {
        let payload_digest = hash_payload(payload);
        Self {
            sender: sender.owner.clone(),
            recipient: Recipient::Node(recipient.clone()),
            topic,
            ciphertext: encrypt(recipient_key, payload, rng).into_bytes(),
            payload_digest,
            signature: sign(&sender.private, payload_digest.as_bytes()),
        }
    }

    pub fn broadcast(sender: &KeyPair, topic: Topic, payload: &[u8]) -> Self {
        let payload_digest = hash_payload(payload);
        Self {
            sender: sender.owner.clone(),
            recipient: Recipient::Broadcast,
            topic,
            ciphertext: payload.to_vec(),
            payload_digest,
            signature: sign(&sender.private, payload_digest.as_bytes()),
        }
    }

    /// Checks the sender's signature, decrypts when directed, and confirms
    /// the plaintext matches `payload_digest`.
    pub fn open(&self, receiver: &KeyPair, directory: &KeyDirectory) -> Result<Vec<u8>, CryptoError> {
        let sender_key = directory
            .get(&self.sender)
            .ok_or_else(|| CryptoError::UnknownKey(self.sender.clone()))?;
        if !verify(sender_key, self.payload_digest.as_bytes(), &self.signature) {
            return Err(CryptoError::BadSignature(self.sender.clone()));
        }
        let plaintext = match &self.recipient {
            Recipient::Broadcast => self.ciphertext.clone(),
            Recipient::Node(node) if *node == receiver.owner => decrypt(
                &receiver.private,
                &Ciphertext::from_bytes(self.ciphertext.clone()),
            )?,
            Recipient::Node(node) => {
                return Err(CryptoError::WrongRecipient {
                    expected: node.to_string(),
                    actual: receiver.owner.clone(),
                })
            }
        };
        if hash_payload(&plaintext) != self.payload_digest {
            return Err(CryptoError::DigestMismatch);
        }
        Ok(plaintext)
    }
}
