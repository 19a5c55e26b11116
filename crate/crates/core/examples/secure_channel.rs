//! Seed-derived key pairs, detached signatures, sealed boxes and the signed
//! envelopes nodes exchange.

use pharmachain::crypto::{
    decrypt, encrypt, generate_keypair, sign, verify, KeyDirectory, SignedEnvelope, Topic,
};
use pharmachain::overlay::NodeId;
use pharmachain::supply::Role;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn run_example() -> String {
    let mut out = String::new();
    let alice = generate_keypair([7; 32], NodeId::new(Role::Pharmacist, 0));
    let again = generate_keypair([7; 32], NodeId::new(Role::Pharmacist, 0));
    let bob = generate_keypair([8; 32], NodeId::new(Role::Distributor, 0));
    assert_eq!(alice.public, again.public);
    out += &format!("alice public key {}\n", alice.public.to_base64());

    let sig = sign(&alice.private, b"order o1: 40 units");
    assert!(verify(&alice.public, b"order o1: 40 units", &sig));
    assert!(!verify(&alice.public, b"order o1: 400 units", &sig));
    out += "signature checks out and rejects an edited message\n";

    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let boxed = encrypt(&bob.public, b"ship to pharmacy 0", &mut rng);
    assert_eq!(decrypt(&bob.private, &boxed).unwrap(), b"ship to pharmacy 0");
    assert!(decrypt(&alice.private, &boxed).is_err());
    out += &format!("sealed {} bytes for bob; alice cannot open them\n", boxed.as_bytes().len());

    let mut directory = KeyDirectory::new();
    directory.insert(alice.owner.clone(), alice.public.clone());
    directory.insert(bob.owner.clone(), bob.public.clone());
    let env = SignedEnvelope::directed(&alice, &bob.owner, &bob.public, Topic::Order, b"40 x Amoxicillin", &mut rng);
    let opened = env.open(&bob, &directory).unwrap();
    out += &format!("bob opened: {}\n", String::from_utf8_lossy(&opened));

    let mut forged = env.clone();
    forged.sender = bob.owner.clone();
    out += &format!("relabelled sender: {}\n", forged.open(&bob, &directory).unwrap_err());
    out
}

#[allow(dead_code)]
fn main() {
    print!("{}", run_example());
}
