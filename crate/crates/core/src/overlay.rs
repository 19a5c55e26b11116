//! Deterministic discrete-event simulation of the peer-to-peer overlay.
//!
//! The overlay is a full mesh over live nodes. Every hop takes
//! `link_latency` simulated seconds; broadcasts are subject to seeded random
//! drops, point-to-point sends are reliable. Receivers suppress any payload
//! digest they have already processed, which also bounds gossip relays and
//! guarantees [`Network::run_until_quiescent`] terminates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{KeyDirectory, PublicKey, SignedEnvelope, Topic};
use crate::ledger::{to_canonical_bytes, HashDigest};
use crate::supply::Role;

/// Node identity, rendered `role-index` (e.g. `pharmacist-2`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub role: Role,
    pub index: u32,
}

impl NodeId {
    pub fn new(role: Role, index: u32) -> Self {
        Self { role, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.role.as_str(), self.index)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node id {0:?}: expected role-index")]
pub struct NodeIdParseError(pub String);

impl FromStr for NodeId {
    type Err = NodeIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NodeIdParseError(s.to_string());
        let (role, index) = s.rsplit_once('-').ok_or_else(err)?;
        let role: Role = role.parse().map_err(|_| err())?;
        // Reject "+1", "01" and friends so each id has one spelling.
        if index.is_empty() || (index.len() > 1 && index.starts_with('0')) || !index.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        Ok(Self {
            role,
            index: index.parse().map_err(|_| err())?,
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Drop probability as an exact fraction `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropRate {
    pub num: u64,
    pub den: u64,
}

impl DropRate {
    pub const NEVER: DropRate = DropRate { num: 0, den: 1 };
    pub const ALWAYS: DropRate = DropRate { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self, OverlayError> {
        let rate = Self { num, den };
        rate.validate()?;
        Ok(rate)
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        if self.den == 0 || self.num > self.den {
            return Err(OverlayError::InvalidDropRate(*self));
        }
        Ok(())
    }
}

impl Default for DropRate {
    fn default() -> Self {
        Self::NEVER
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub link_latency: u64,
    pub drop_rate: DropRate,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            link_latency: 1,
            drop_rate: DropRate::NEVER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverlayError {
    #[error("node {0} already joined")]
    DuplicateNode(NodeId),
    #[error("node {0} is not part of the overlay")]
    UnknownNode(NodeId),
    #[error("sender {0} is not live")]
    UnknownSender(NodeId),
    #[error("drop rate {}/{} is outside [0, 1]", .0.num, .0.den)]
    InvalidDropRate(DropRate),
}

/// A scheduled delivery of one envelope over one hop.
#[derive(Debug, Clone)]
pub struct SimEvent {
    pub deliver_at: u64,
    pub sent_at: u64,
    pub seq: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub envelope: SignedEnvelope,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.deliver_at == other.deliver_at && self.seq == other.seq
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    // Reversed so BinaryHeap pops the earliest (deliver_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.deliver_at, other.seq).cmp(&(self.deliver_at, self.seq))
    }
}

/// One processed delivery, as exported to the delivery log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub t: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub digest: HashDigest,
    pub kind: Topic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryLog(pub Vec<Delivery>);

impl DeliveryLog {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Delivery> {
        self.0.iter()
    }

    /// Newline-delimited JSON, one `{t, from, to, digest, kind}` per line.
    pub fn to_ndjson(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for d in &self.0 {
            out.extend(to_canonical_bytes(d).expect("delivery has no floats"));
            out.push(b'\n');
        }
        out
    }

    pub fn from_ndjson(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        bytes
            .split(|b| *b == b'\n')
            .filter(|l| !l.is_empty())
            .map(serde_json::from_slice)
            .collect::<Result<Vec<_>, _>>()
            .map(DeliveryLog)
    }
}

#[derive(Debug, Default)]
struct Slot {
    seen: HashSet<HashDigest>,
    inbox: Vec<(Delivery, SignedEnvelope)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetworkStats {
    pub scheduled: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub suppressed: u64,
}

pub struct Network {
    config: SimConfig,
    now: u64,
    rng: ChaCha8Rng,
    nodes: BTreeMap<NodeId, Slot>,
    directory: KeyDirectory,
    queue: BinaryHeap<SimEvent>,
    seq: u64,
    log: Vec<Delivery>,
    stats: NetworkStats,
}

impl Network {
    pub fn new(config: SimConfig) -> Result<Self, OverlayError> {
        config.drop_rate.validate()?;
        Ok(Self {
            config,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            nodes: BTreeMap::new(),
            directory: KeyDirectory::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
            stats: NetworkStats::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Moves the clock forward; never backwards.
    pub fn advance_to(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    pub fn join_node(&mut self, node: NodeId, key: PublicKey) -> Result<(), OverlayError> {
        if self.nodes.contains_key(&node) {
            return Err(OverlayError::DuplicateNode(node));
        }
        self.directory.insert(node.clone(), key);
        self.nodes.insert(node, Slot::default());
        Ok(())
    }

    pub fn leave_node(&mut self, node: &NodeId) -> Result<(), OverlayError> {
        if self.nodes.remove(node).is_none() {
            return Err(OverlayError::UnknownNode(node.clone()));
        }
        self.directory.remove(node);
        Ok(())
    }

    pub fn is_live(&self, node: &NodeId) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    /// Full mesh: every other live node.
    pub fn peers(&self, node: &NodeId) -> Vec<NodeId> {
        self.nodes.keys().filter(|n| *n != node).cloned().collect()
    }

    /// Public keys of the live nodes.
    pub fn directory(&self) -> &KeyDirectory {
        &self.directory
    }

    pub fn stats(&self) -> NetworkStats {
        self.stats
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn should_drop(&mut self) -> bool {
        let DropRate { num, den } = self.config.drop_rate;
        match num {
            0 => false,
            n if n == den => true,
            n => self.rng.gen_range(0..den) < n,
        }
    }

    fn schedule(&mut self, from: &NodeId, to: NodeId, envelope: SignedEnvelope) {
        self.seq += 1;
        self.stats.scheduled += 1;
        self.queue.push(SimEvent {
            deliver_at: self.now + self.config.link_latency,
            sent_at: self.now,
            seq: self.seq,
            from: from.clone(),
            to,
            envelope,
        });
    }

    fn mark_seen(&mut self, node: &NodeId, digest: HashDigest) {
        if let Some(slot) = self.nodes.get_mut(node) {
            slot.seen.insert(digest);
        }
    }

    /// Schedules one delivery per live peer, minus seeded drops. Returns the
    /// number actually scheduled.
    pub fn broadcast(&mut self, sender: &NodeId, envelope: SignedEnvelope) -> Result<usize, OverlayError> {
        if !self.is_live(sender) {
            return Err(OverlayError::UnknownSender(sender.clone()));
        }
        self.mark_seen(sender, envelope.payload_digest);
        let mut scheduled = 0;
        for peer in self.peers(sender) {
            if self.should_drop() {
                self.stats.dropped += 1;
                continue;
            }
            self.schedule(sender, peer, envelope.clone());
            scheduled += 1;
        }
        Ok(scheduled)
    }

    /// Reliable point-to-point send.
    pub fn send(&mut self, sender: &NodeId, to: &NodeId, envelope: SignedEnvelope) -> Result<(), OverlayError> {
        if !self.is_live(sender) {
            return Err(OverlayError::UnknownSender(sender.clone()));
        }
        if !self.is_live(to) {
            return Err(OverlayError::UnknownNode(to.clone()));
        }
        self.mark_seen(sender, envelope.payload_digest);
        self.schedule(sender, to.clone(), envelope);
        Ok(())
    }

    /// Processes events in `(deliver_at, insertion order)` until none remain.
    pub fn run_until_quiescent(&mut self) -> DeliveryLog {
        self.run_until_quiescent_with(|_, _, _| {})
    }

    /// Like [`Network::run_until_quiescent`], calling `handler` on every
    /// processed delivery. The handler may send or broadcast follow-ups.
    pub fn run_until_quiescent_with<F>(&mut self, mut handler: F) -> DeliveryLog
    where
        F: FnMut(&mut Network, &Delivery, &SignedEnvelope),
    {
        let start = self.log.len();
        while let Some(event) = self.queue.pop() {
            debug_assert!(event.deliver_at >= event.sent_at);
            self.now = self.now.max(event.deliver_at);
            let digest = event.envelope.payload_digest;
            let Some(slot) = self.nodes.get_mut(&event.to) else {
                self.stats.dropped += 1;
                continue;
            };
            if !slot.seen.insert(digest) {
                self.stats.suppressed += 1;
                continue;
            }
            let delivery = Delivery {
                t: event.deliver_at,
                from: event.from,
                to: event.to,
                digest,
                kind: event.envelope.topic,
            };
            slot.inbox.push((delivery.clone(), event.envelope.clone()));
            self.stats.delivered += 1;
            self.log.push(delivery.clone());
            handler(self, &delivery, &event.envelope);
        }
        DeliveryLog(self.log[start..].to_vec())
    }

    /// Drains everything delivered to `node` so far.
    pub fn take_inbox(&mut self, node: &NodeId) -> Vec<(Delivery, SignedEnvelope)> {
        self.nodes
            .get_mut(node)
            .map(|s| std::mem::take(&mut s.inbox))
            .unwrap_or_default()
    }

    /// Every delivery since the network was created.
    pub fn delivery_log(&self) -> DeliveryLog {
        DeliveryLog(self.log.clone())
    }

    pub fn has_seen(&self, node: &NodeId, digest: &HashDigest) -> bool {
        self.nodes.get(node).is_some_and(|s| s.seen.contains(digest))
    }

    /// Live nodes that have processed `digest`.
    pub fn holders(&self, digest: &HashDigest) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, s)| s.seen.contains(digest))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyPair};
    use crate::ledger::{Block, Chain, TransactionRecord, TxKind};

    fn roles() -> Vec<NodeId> {
        Role::ALL.iter().map(|r| NodeId::new(*r, 0)).collect()
    }

    fn keyed(nodes: &[NodeId]) -> Vec<KeyPair> {
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| generate_keypair([i as u8 + 1; 32], n.clone()))
            .collect()
    }

    fn net_with(config: SimConfig, nodes: &[NodeId]) -> (Network, Vec<KeyPair>) {
        let keys = keyed(nodes);
        let mut net = Network::new(config).unwrap();
        for k in &keys {
            net.join_node(k.owner.clone(), k.public).unwrap();
        }
        (net, keys)
    }

    #[test]
    fn node_id_render_and_parse() {
        let id = NodeId::new(Role::Pharmacist, 2);
        assert_eq!(id.to_string(), "pharmacist-2");
        assert_eq!("pharmacist-2".parse::<NodeId>().unwrap(), id);
        for bad in ["pharmacist", "pharmacist-", "pharmacist-02", "doctor-1", "pharmacist-+1"] {
            assert!(bad.parse::<NodeId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn full_mesh_peer_tables() {
        let (net, _) = net_with(SimConfig::new(1), &roles());
        for n in roles() {
            let peers = net.peers(&n);
            assert_eq!(peers.len(), 5);
            assert!(!peers.contains(&n));
        }
    }

    #[test]
    fn duplicate_join_rejected() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles());
        assert_eq!(
            net.join_node(keys[0].owner.clone(), keys[0].public),
            Err(OverlayError::DuplicateNode(keys[0].owner.clone()))
        );
    }

    #[test]
    fn broadcast_reaches_each_peer_once() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles());
        let env = SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"hello");
        assert_eq!(net.broadcast(&keys[0].owner, env).unwrap(), 5);
        let log = net.run_until_quiescent();
        assert_eq!(log.len(), 5);
        assert!(log.iter().all(|d| d.t == 1));
        assert!(net.run_until_quiescent().is_empty());
    }

    #[test]
    fn late_joiner_receives_broadcast() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles()[..3]);
        let late = generate_keypair([99; 32], NodeId::new(Role::Customer, 7));
        net.join_node(late.owner.clone(), late.public).unwrap();
        net.broadcast(&keys[0].owner, SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"x"))
            .unwrap();
        net.run_until_quiescent();
        assert_eq!(net.take_inbox(&late.owner).len(), 1);
    }

    #[test]
    fn departed_node_receives_nothing() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles());
        net.leave_node(&keys[5].owner).unwrap();
        net.broadcast(&keys[0].owner, SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"x"))
            .unwrap();
        let log = net.run_until_quiescent();
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|d| d.to != keys[5].owner));
    }

    #[test]
    fn in_flight_to_departed_node_dropped() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles());
        net.broadcast(&keys[0].owner, SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"x"))
            .unwrap();
        net.leave_node(&keys[3].owner).unwrap();
        assert_eq!(net.run_until_quiescent().len(), 4);
        assert_eq!(net.stats().dropped, 1);
    }

    #[test]
    fn leave_unknown_node() {
        let (mut net, _) = net_with(SimConfig::new(1), &roles());
        let ghost = NodeId::new(Role::Customer, 42);
        assert_eq!(net.leave_node(&ghost), Err(OverlayError::UnknownNode(ghost)));
    }

    #[test]
    fn lone_node_broadcasts_to_nobody() {
        let (mut net, keys) = net_with(SimConfig::new(1), &roles());
        for k in &keys[1..] {
            net.leave_node(&k.owner).unwrap();
        }
        let sent = net
            .broadcast(&keys[0].owner, SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"x"))
            .unwrap();
        assert_eq!(sent, 0);
        assert!(net.run_until_quiescent().is_empty());
    }

    #[test]
    fn unknown_sender_rejected() {
        let (mut net, _) = net_with(SimConfig::new(1), &roles());
        let ghost = generate_keypair([7; 32], NodeId::new(Role::Customer, 9));
        let env = SignedEnvelope::broadcast(&ghost, Topic::Notice, b"x");
        assert_eq!(
            net.broadcast(&ghost.owner, env),
            Err(OverlayError::UnknownSender(ghost.owner.clone()))
        );
    }

    #[test]
    fn drop_everything() {
        let mut cfg = SimConfig::new(3);
        cfg.drop_rate = DropRate::ALWAYS;
        let (mut net, keys) = net_with(cfg, &roles());
        net.broadcast(&keys[0].owner, SignedEnvelope::broadcast(&keys[0], Topic::Notice, b"x"))
            .unwrap();
        assert!(net.run_until_quiescent().is_empty());
    }

    #[test]
    fn invalid_drop_rate() {
        let mut cfg = SimConfig::new(3);
        cfg.drop_rate = DropRate { num: 3, den: 2 };
        assert!(matches!(Network::new(cfg), Err(OverlayError::InvalidDropRate(_))));
        assert!(DropRate::new(1, 0).is_err());
    }

    fn lossy_run(seed: u64) -> DeliveryLog {
        let mut cfg = SimConfig::new(seed);
        cfg.drop_rate = DropRate { num: 1, den: 3 };
        let nodes: Vec<NodeId> = (0..8).map(|i| NodeId::new(Role::Customer, i)).collect();
        let (mut net, keys) = net_with(cfg, &nodes);
        for (i, k) in keys.iter().enumerate() {
            let env = SignedEnvelope::broadcast(k, Topic::Notice, format!("m{i}").as_bytes());
            net.broadcast(&k.owner, env).unwrap();
        }
        net.run_until_quiescent_with(|net, d, env| {
            let _ = net.broadcast(&d.to, env.clone());
        })
    }

    #[test]
    fn same_seed_same_log() {
        assert_eq!(lossy_run(17), lossy_run(17));
        assert_eq!(lossy_run(17).to_ndjson(), lossy_run(17).to_ndjson());
    }

    #[test]
    fn log_timestamps_non_decreasing_and_no_duplicates() {
        let log = lossy_run(5);
        assert!(log.0.windows(2).all(|w| w[0].t <= w[1].t));
        let mut seen = HashSet::new();
        for d in log.iter() {
            assert!(seen.insert((d.to.clone(), d.digest)));
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let log = lossy_run(9);
        assert_eq!(DeliveryLog::from_ndjson(&log.to_ndjson()).unwrap(), log);
    }

    #[test]
    fn head_announcement_cascade_converges() {
        let nodes = roles();
        let (mut net, keys) = net_with(SimConfig::new(4), &nodes);
        let miner = &keys[1];
        let mut miner_chain = Chain::new(miner.owner.clone());
        let mut replicas: BTreeMap<NodeId, Chain> = nodes
            .iter()
            .map(|n| (n.clone(), Chain::new(miner.owner.clone())))
            .collect();
        for round in 1..=3u64 {
            let tx = TransactionRecord::signed(
                miner,
                crate::ledger::hash_payload(&round.to_le_bytes()),
                TxKind::MineVerdict,
                format!("B{round}"),
                round,
            );
            miner_chain.seal(vec![tx], miner.owner.clone(), round).unwrap();
            replicas.insert(miner.owner.clone(), miner_chain.clone());
            let bytes = miner_chain.head().to_canonical_bytes();
            net.broadcast(&miner.owner, SignedEnvelope::broadcast(miner, Topic::BlockAnnounce, &bytes))
                .unwrap();
            net.run_until_quiescent_with(|net, d, env| {
                let block: Block = serde_json::from_slice(&env.ciphertext).unwrap();
                replicas.get_mut(&d.to).unwrap().push(block).unwrap();
                let _ = net.broadcast(&d.to, env.clone());
            });
        }
        for chain in replicas.values() {
            assert_eq!(chain.head_hash(), miner_chain.head_hash());
        }
    }
}
