//! The seeded peer-to-peer overlay: one reliable directed send, one lossy
//! broadcast that peers relay until the network goes quiet.

use pharmachain::crypto::{generate_keypair, KeyPair, SignedEnvelope, Topic};
use pharmachain::overlay::{DropRate, Network, NodeId, SimConfig};
use pharmachain::supply::Role;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> String {
    let config = SimConfig {
        seed: 11,
        link_latency: 2,
        drop_rate: DropRate::new(1, 4).unwrap(),
    };
    let mut net = Network::new(config).unwrap();
    let nodes: Vec<KeyPair> = [Role::Producer, Role::Miner, Role::Supplier, Role::Distributor, Role::Pharmacist]
        .into_iter()
        .enumerate()
        .map(|(i, r)| generate_keypair([i as u8 + 1; 32], NodeId::new(r, 0)))
        .collect();
    for kp in &nodes {
        net.join_node(kp.owner.clone(), kp.public.clone()).unwrap();
    }

    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (pharmacist, distributor) = (&nodes[4], &nodes[3]);
    let env = SignedEnvelope::directed(pharmacist, &distributor.owner, &distributor.public, Topic::Order, b"60 units", &mut rng);
    net.send(&pharmacist.owner, &distributor.owner, env).unwrap();

    let announce = SignedEnvelope::broadcast(&nodes[1], Topic::BlockAnnounce, b"height 7");
    let scheduled = net.broadcast(&nodes[1].owner, announce).unwrap();

    // Every first receipt is relayed once, so drops on one link are usually
    // covered by another path.
    let log = net.run_until_quiescent_with(|net, delivery, env| {
        if env.topic == Topic::BlockAnnounce {
            let _ = net.broadcast(&delivery.to, env.clone());
        }
    });

    let mut out = format!("broadcast scheduled on {scheduled} of 4 links\n");
    for d in log.iter() {
        out += &format!("t={:<3} {:<14} -> {:<14} {:?}\n", d.t, d.from.to_string(), d.to.to_string(), d.kind);
    }
    let stats = net.stats();
    out += &format!("stats: {stats:?}\n");
    let directory = net.directory().clone();
    for (_, env) in net.take_inbox(&distributor.owner) {
        out += &format!("distributor read {:?}\n", String::from_utf8_lossy(&env.open(distributor, &directory).unwrap()));
    }
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
