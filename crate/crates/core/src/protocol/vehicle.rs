use super::auth::{build_auth_packet, AuthPacket};
use super::messages::{Certificate, SealedUpdateRequest, SignedMessage, UpdateReason, UpdateRequest};
use super::ProtocolError;
use crate::ledger::Chain;
use crate::merkleproofs::{LexBound, LexTree};
use crate::reputation::Message;
use crate::sigcrypt::{hash_parts, keygen, seal, EnvelopeKey, KeyPair, PublicKey};

/// A vehicle's key lifecycle. Every key is derived from a private master
/// seed and a generation counter, so runs are reproducible while successive
/// keys remain unrelated to outside observers.
#[derive(Debug)]
pub struct Vehicle {
    seed: [u8; 32],
    generation: u32,
    keys: KeyPair,
    certificate: Option<Certificate>,
    pending: Option<(u32, KeyPair)>,
    /// Keys held before the current one.
    past: Vec<PublicKey>,
    identity: Vec<u8>,
}

/// Key derivations tried before settling for one that sits next to one of
/// our own keys in RevBC.
pub const MAX_KEY_REROLLS: u32 = 64;

fn derive(seed: &[u8; 32], label: &[u8], generation: u32) -> [u8; 32] {
    *hash_parts(&[b"bars-vehicle", label, seed, &generation.to_be_bytes()]).as_bytes()
}

impl Vehicle {
    pub fn new(seed: [u8; 32], identity: Vec<u8>) -> Self {
        Self {
            seed,
            generation: 0,
            keys: keygen(derive(&seed, b"key", 0)),
            certificate: None,
            pending: None,
            past: Vec::new(),
            identity,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.certificate.as_ref()
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// Installs the certificate for the current key.
    pub fn install_certificate(&mut self, cert: Certificate) -> Result<(), ProtocolError> {
        if cert.pu_vehicle != self.keys.public {
            return Err(ProtocolError::UnknownKey(cert.pu_vehicle.fingerprint()));
        }
        self.certificate = Some(cert);
        Ok(())
    }

    /// Generates the next key and returns a request for it, signed with the
    /// current key and sealed to the LEA.
    pub fn request_update(&mut self, lea: &EnvelopeKey, reason: UpdateReason, now: u64) -> SealedUpdateRequest {
        self.request_update_avoiding(lea, reason, now, None)
    }

    /// Like [`Vehicle::request_update`], but skips key derivations whose
    /// neighbours in `revoked` plus the current key (which the update
    /// revokes) include a key of ours. Absence proofs quote both neighbours,
    /// and later insertions only push keys apart, so no broadcast will ever
    /// carry two of our keys.
    pub fn request_update_avoiding(
        &mut self,
        lea: &EnvelopeKey,
        reason: UpdateReason,
        now: u64,
        revoked: Option<&LexTree>,
    ) -> SealedUpdateRequest {
        let mut next = self.generation + 1;
        let mut new = keygen(derive(&self.seed, b"key", next));
        if let Some(tree) = revoked {
            let mut keys: Vec<PublicKey> = tree.entries().iter().map(|e| e.key).collect();
            keys.push(self.keys.public);
            keys.sort_unstable();
            for _ in 0..MAX_KEY_REROLLS {
                if !self.neighbours_own(&keys, &new.public) {
                    break;
                }
                next += 1;
                new = keygen(derive(&self.seed, b"key", next));
            }
        }
        let req =
            UpdateRequest::new(&self.keys.private, self.keys.public, new.public, self.identity.clone(), reason, now);
        self.pending = Some((next, new));
        SealedUpdateRequest(seal(lea, &req.to_bytes(), derive(&self.seed, b"envelope", next)))
    }

    fn is_own(&self, pu: &PublicKey) -> bool {
        *pu == self.keys.public || self.past.contains(pu)
    }

    fn neighbours_own(&self, sorted: &[PublicKey], target: &PublicKey) -> bool {
        let pos = sorted.partition_point(|k| k < target);
        let below = pos.checked_sub(1).map(|i| &sorted[i]);
        below.into_iter().chain(sorted.get(pos)).any(|k| self.is_own(k))
    }

    /// True if the packet's absence proof names one of our earlier keys.
    /// Expiries can bring an old key next to the current one again.
    pub fn exposes_past_key(&self, packet: &AuthPacket) -> bool {
        [&packet.absence.lower.bound, &packet.absence.upper.bound]
            .into_iter()
            .any(|b| matches!(b, LexBound::Key(k) if self.past.contains(k)))
    }

    /// Switches to the pending key once its certificate arrives. Only the
    /// public half of the old key is kept.
    pub fn complete_update(&mut self, cert: Certificate) -> Result<(), ProtocolError> {
        let (_, pending) = self.pending.as_ref().ok_or(ProtocolError::NoCertificate)?;
        if cert.pu_vehicle != pending.public {
            return Err(ProtocolError::UnknownKey(cert.pu_vehicle.fingerprint()));
        }
        let (generation, keys) = self.pending.take().expect("checked above");
        self.past.push(self.keys.public);
        self.keys = keys;
        self.generation = generation;
        self.certificate = Some(cert);
        Ok(())
    }

    pub fn sign(&self, message: Message) -> SignedMessage {
        SignedMessage::new(&self.keys.private, message)
    }

    pub fn packet(&self, cerbc: &Chain, revbc: &Chain) -> Result<AuthPacket, ProtocolError> {
        let cert = self.certificate.as_ref().ok_or(ProtocolError::NoCertificate)?;
        build_auth_packet(cert, cerbc, revbc)
    }
}
