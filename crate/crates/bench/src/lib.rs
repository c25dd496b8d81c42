//! Fixtures shared by the benchmarks.

use bars_core::ledger::{ChainKind, TrustAnchors};
use bars_core::merkleproofs::{LexEntry, LexTree};
use bars_core::protocol::messages::certificate_body;
use bars_core::protocol::{AuthContext, AuthPacket, Certificate};
use bars_core::sigcrypt::{hash_parts, keygen, sign, KeyPair, PublicKey};
use bars_core::AppendTree;

pub struct Fixture {
    pub ca: KeyPair,
    pub lea: KeyPair,
    pub packet: AuthPacket,
    pub ctx: AuthContext,
    pub leaf: Vec<u8>,
}

fn seed(label: &str, i: u64) -> [u8; 32] {
    *hash_parts(&[b"bench", label.as_bytes(), &i.to_be_bytes()]).as_bytes()
}

pub fn certificate(ca: &KeyPair, lea: &KeyPair, pu: PublicKey) -> Certificate {
    let expiry = u64::MAX / 2;
    let body = certificate_body(&pu, 50.0, expiry);
    Certificate {
        pu_ca: ca.public,
        sig_ca: sign(&ca.private, &body),
        pu_lea: lea.public,
        sig_lea: sign(&lea.private, &body),
        pu_vehicle: pu,
        reputation: 50.0,
        expiry,
    }
}

pub fn anchors(ca: &KeyPair, lea: &KeyPair) -> TrustAnchors {
    TrustAnchors { ca: ca.public, lea: lea.public }
}

pub const CHAIN: ChainKind = ChainKind::CerBc;

/// A CerBC of `n` leaves holding one real certificate in the middle, and a
/// RevBC of `m` unrelated keys.
pub fn fixture(n: u64, m: u64) -> Fixture {
    let ca = keygen(seed("ca", 0));
    let lea = keygen(seed("lea", 0));
    let cert = certificate(&ca, &lea, keygen(seed("vehicle", n)).public);
    let leaf = cert.to_bytes();
    let at = n / 2;
    let tree: AppendTree = (0..n)
        .map(|i| if i == at { AppendTree::leaf_digest(&leaf) } else { hash_parts(&[b"filler", &i.to_be_bytes()]) })
        .collect();
    let revoked = (0..m).map(|t| LexEntry { key: PublicKey::from_bytes(seed("revoked", t)), rev_time: t }).collect();
    let lex = LexTree::from_entries(revoked).expect("distinct keys");
    let packet = AuthPacket {
        presence: tree.prove_presence(at as usize).expect("in range"),
        absence: lex.prove_absence(&cert.pu_vehicle).expect("absent"),
        certificate: cert,
        cerbc_height: 1,
        revbc_height: 1,
    };
    let ctx = AuthContext { cerbc_root: tree.root(), revbc_root: lex.root(), now: 0 };
    Fixture { ca, lea, packet, ctx, leaf }
}
