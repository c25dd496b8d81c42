//! Hashing, signing and sealed-envelope primitives.
//!
//! Signatures are Ed25519 (32-byte public keys, 64-byte signatures). Keys are
//! derived deterministically from a 32-byte seed so that simulations replay
//! bit-for-bit. Sealed envelopes use X25519 + ChaCha20-Poly1305 and are only
//! used for messages addressed to a single authority.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

macro_rules! hex_bytes_type {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                <[u8; $len]>::try_from(bytes).ok().map(Self)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(&self.0[..8]))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <String as serde::Deserialize>::deserialize(d)?;
                let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
                Self::from_slice(&raw)
                    .ok_or_else(|| serde::de::Error::custom(concat!("bad length for ", stringify!($name))))
            }
        }
    };
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; DIGEST_LEN]);
hex_bytes_type!(Digest, DIGEST_LEN);

/// Ed25519 verifying key bytes. Ordering is lexicographic over the bytes,
/// which is the order used by the revocation tree.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);
hex_bytes_type!(PublicKey, PUBLIC_KEY_LEN);

impl PublicKey {
    /// Short hex label used in logs and CSV output.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);
hex_bytes_type!(Signature, SIGNATURE_LEN);

/// Signing half of a key pair. Deliberately not serializable.
#[derive(Clone)]
pub struct PrivateKey(SigningKey);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hashes the concatenation of `parts` without materializing it.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

pub fn keygen(seed: [u8; 32]) -> KeyPair {
    let sk = SigningKey::from_bytes(&seed);
    KeyPair {
        public: PublicKey(sk.verifying_key().to_bytes()),
        private: PrivateKey(sk),
    }
}

pub fn sign(private: &PrivateKey, msg: &[u8]) -> Signature {
    Signature(private.0.sign(msg).to_bytes())
}

/// Returns false for any malformed key or signature rather than erroring.
pub fn verify(public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(msg, &sig).is_ok()
}

/// X25519 key pair used to receive sealed envelopes.
#[derive(Clone)]
pub struct EnvelopeKeyPair {
    secret: x25519_dalek::StaticSecret,
    pub public: EnvelopeKey,
}

impl fmt::Debug for EnvelopeKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvelopeKeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvelopeKey([u8; 32]);
hex_bytes_type!(EnvelopeKey, 32);

impl EnvelopeKeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        let secret = x25519_dalek::StaticSecret::from(seed);
        let public = EnvelopeKey(x25519_dalek::PublicKey::from(&secret).to_bytes());
        Self { secret, public }
    }

    pub fn open(&self, sealed: &SealedBox) -> Option<Vec<u8>> {
        let eph = x25519_dalek::PublicKey::from(sealed.ephemeral);
        let shared = self.secret.diffie_hellman(&eph);
        let cipher = envelope_cipher(shared.as_bytes(), &sealed.ephemeral, &self.public.0);
        cipher.decrypt(Nonce::from_slice(&[0u8; 12]), sealed.ciphertext.as_slice()).ok()
    }
}

/// Ciphertext addressed to one `EnvelopeKey`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedBox {
    pub ephemeral: [u8; 32],
    pub ciphertext: Vec<u8>,
}

impl SealedBox {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.ciphertext.len());
        out.extend_from_slice(&self.ephemeral);
        out.extend_from_slice(&self.ciphertext);
        out
    }
}

fn envelope_cipher(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> ChaCha20Poly1305 {
    let key = hash_parts(&[b"bars-envelope-v1", shared, ephemeral, recipient]);
    ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()))
}

/// Encrypts `plaintext` to `recipient`. The ephemeral secret comes from
/// `ephemeral_seed`; each seed must be used for one message only since the
/// nonce is fixed.
pub fn seal(recipient: &EnvelopeKey, plaintext: &[u8], ephemeral_seed: [u8; 32]) -> SealedBox {
    let eph_secret = x25519_dalek::StaticSecret::from(ephemeral_seed);
    let eph_public = x25519_dalek::PublicKey::from(&eph_secret).to_bytes();
    let shared = eph_secret.diffie_hellman(&x25519_dalek::PublicKey::from(recipient.0));
    let cipher = envelope_cipher(shared.as_bytes(), &eph_public, &recipient.0);
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&[0u8; 12]), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    SealedBox { ephemeral: eph_public, ciphertext }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn empty_and_abc_digests() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_parts_matches_concatenation() {
        assert_eq!(hash_parts(&[b"ab", b"", b"c"]), hash(b"abc"));
    }

    #[test]
    fn hash_long_input() {
        let data = vec![0x5au8; 1 << 20];
        let d = hash(&data);
        assert_eq!(d, hash(&data));
        assert_eq!(d.as_bytes().len(), 32);
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen([7; 32]);
        let b = keygen([7; 32]);
        assert_eq!(a.public, b.public);
        let sa = sign(&a.private, b"m");
        assert_eq!(sa, sign(&b.private, b"m"));
    }

    #[test]
    fn distinct_seeds_give_distinct_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let seed: [u8; 32] = rng.gen();
            assert!(seen.insert(keygen(seed).public));
        }
    }

    #[test]
    fn sign_verify_binding() {
        let k1 = keygen([1; 32]);
        let k2 = keygen([2; 32]);
        let sig = sign(&k1.private, b"hello");
        assert!(verify(&k1.public, b"hello", &sig));
        assert!(!verify(&k1.public, b"hellp", &sig));
        assert!(!verify(&k2.public, b"hello", &sig));
    }

    #[test]
    fn random_blobs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kp = keygen([3; 32]);
        for _ in 0..1000 {
            let mut blob = [0u8; 64];
            rng.fill(&mut blob[..]);
            assert!(!verify(&kp.public, b"msg", &Signature::from_bytes(blob)));
            let mut pk = [0u8; 32];
            rng.fill(&mut pk[..]);
            assert!(!verify(&PublicKey::from_bytes(pk), b"msg", &Signature::from_bytes(blob)));
        }
    }

    #[test]
    fn envelope_round_trip_and_wrong_recipient() {
        let lea = EnvelopeKeyPair::from_seed([9; 32]);
        let other = EnvelopeKeyPair::from_seed([10; 32]);
        let sealed = seal(&lea.public, b"secret request", [11; 32]);
        assert_eq!(lea.open(&sealed).as_deref(), Some(&b"secret request"[..]));
        assert_eq!(other.open(&sealed), None);
        let mut tampered = sealed.clone();
        tampered.ciphertext[0] ^= 1;
        assert_eq!(lea.open(&tampered), None);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_any_message(seed in proptest::array::uniform32(proptest::num::u8::ANY),
                                  msg in proptest::collection::vec(proptest::num::u8::ANY, 0..256)) {
            let kp = keygen(seed);
            proptest::prop_assert!(verify(&kp.public, &msg, &sign(&kp.private, &msg)));
        }
    }
}
