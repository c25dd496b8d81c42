//! Wire types exchanged between vehicles, the enforcement authority (LEA),
//! the certificate authority (CA) and roadside units.

use crate::codec::{DecodeError, Reader, Writer};
use crate::reputation::Message;
use crate::sigcrypt::{sign, verify, PrivateKey, PublicKey, SealedBox, Signature};

const CERT_DOMAIN: &[u8] = b"bars-cert-v1";
const REV_DOMAIN: &[u8] = b"bars-rev-v1";
const UPDATE_DOMAIN: &[u8] = b"bars-update-v1";
const MSG_DOMAIN: &[u8] = b"bars-msg-v1";

/// Serialized certificate size: three keys, two signatures, score, expiry.
pub const CERTIFICATE_LEN: usize = 3 * PublicKey::LEN + 2 * Signature::LEN + 8 + 8;

/// Anonymous credential binding a pseudonym key to a reputation score and
/// an expiry time. Carries no identity field.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Certificate {
    pub pu_ca: PublicKey,
    pub sig_ca: Signature,
    pub pu_lea: PublicKey,
    pub sig_lea: Signature,
    pub pu_vehicle: PublicKey,
    pub reputation: f64,
    /// Simulated milliseconds.
    pub expiry: u64,
}

/// Bytes both authorities sign for a certificate (and the LEA warrant).
pub fn certificate_body(pu_vehicle: &PublicKey, reputation: f64, expiry: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(CERT_DOMAIN).raw(pu_vehicle.as_bytes()).f64(reputation).u64(expiry);
    w.finish()
}

impl Certificate {
    pub fn body(&self) -> Vec<u8> {
        certificate_body(&self.pu_vehicle, self.reputation, self.expiry)
    }

    /// Checks both signatures against the keys embedded in the certificate.
    pub fn signatures_valid(&self) -> bool {
        let body = self.body();
        verify(&self.pu_ca, &body, &self.sig_ca) && verify(&self.pu_lea, &body, &self.sig_lea)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.raw(self.pu_ca.as_bytes())
            .raw(self.sig_ca.as_bytes())
            .raw(self.pu_lea.as_bytes())
            .raw(self.sig_lea.as_bytes())
            .raw(self.pu_vehicle.as_bytes())
            .f64(self.reputation)
            .u64(self.expiry);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            pu_ca: PublicKey::from_bytes(r.array()?),
            sig_ca: Signature::from_bytes(r.array()?),
            pu_lea: PublicKey::from_bytes(r.array()?),
            sig_lea: Signature::from_bytes(r.array()?),
            pu_vehicle: PublicKey::from_bytes(r.array()?),
            reputation: r.f64()?,
            expiry: r.u64()?,
        })
    }
}

/// LEA's instruction to the CA to issue a certificate for a new key. Never
/// names the key it replaces.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Warrant {
    pub subject_pu: PublicKey,
    pub reputation: f64,
    pub expiry: u64,
    pub sig_lea: Signature,
}

impl Warrant {
    pub fn new(signer: &PrivateKey, subject_pu: PublicKey, reputation: f64, expiry: u64) -> Self {
        let sig_lea = sign(signer, &certificate_body(&subject_pu, reputation, expiry));
        Self { subject_pu, reputation, expiry, sig_lea }
    }

    pub fn verify(&self, pu_lea: &PublicKey) -> bool {
        verify(pu_lea, &certificate_body(&self.subject_pu, self.reputation, self.expiry), &self.sig_lea)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(self.subject_pu.as_bytes()).f64(self.reputation).u64(self.expiry).raw(self.sig_lea.as_bytes());
        w.finish()
    }
}

pub fn revocation_body(pu_rev: &PublicKey, t_rev: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(REV_DOMAIN).raw(pu_rev.as_bytes()).u64(t_rev);
    w.finish()
}

/// LEA's signed instruction to the CA to revoke a key.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RevocationOrder {
    pub pu_rev: PublicKey,
    pub t_rev: u64,
    pub sig_lea: Signature,
}

impl RevocationOrder {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(self.pu_rev.as_bytes()).u64(self.t_rev).raw(self.sig_lea.as_bytes());
        w.finish()
    }
}

/// Doubly signed revocation broadcast by the CA and folded into RevBC.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RevocationMessage {
    pub pu_ca: PublicKey,
    pub sig_ca: Signature,
    pub pu_lea: PublicKey,
    pub sig_lea: Signature,
    pub pu_rev: PublicKey,
    pub t_rev: u64,
}

impl RevocationMessage {
    pub fn signatures_valid(&self) -> bool {
        let body = revocation_body(&self.pu_rev, self.t_rev);
        verify(&self.pu_ca, &body, &self.sig_ca) && verify(&self.pu_lea, &body, &self.sig_lea)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.raw(self.pu_ca.as_bytes())
            .raw(self.sig_ca.as_bytes())
            .raw(self.pu_lea.as_bytes())
            .raw(self.sig_lea.as_bytes())
            .raw(self.pu_rev.as_bytes())
            .u64(self.t_rev);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            pu_ca: PublicKey::from_bytes(r.array()?),
            sig_ca: Signature::from_bytes(r.array()?),
            pu_lea: PublicKey::from_bytes(r.array()?),
            sig_lea: Signature::from_bytes(r.array()?),
            pu_rev: PublicKey::from_bytes(r.array()?),
            t_rev: r.u64()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateReason {
    /// The current certificate is about to expire.
    Expiring,
    /// The current private key may be compromised.
    KeyThreatened,
    /// Routine pseudonym change.
    Privacy,
}

impl UpdateReason {
    fn to_byte(self) -> u8 {
        match self {
            UpdateReason::Expiring => 1,
            UpdateReason::KeyThreatened => 2,
            UpdateReason::Privacy => 3,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(UpdateReason::Expiring),
            2 => Some(UpdateReason::KeyThreatened),
            3 => Some(UpdateReason::Privacy),
            _ => None,
        }
    }
}

/// Plaintext of a certificate update request. Only ever travels sealed to
/// the LEA envelope key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateRequest {
    pub current_pu: PublicKey,
    pub new_pu: PublicKey,
    pub identity_proof: Vec<u8>,
    pub reason: UpdateReason,
    pub timestamp: u64,
    /// By the current private key over everything above.
    pub sig: Signature,
}

impl UpdateRequest {
    fn body(
        current_pu: &PublicKey,
        new_pu: &PublicKey,
        identity_proof: &[u8],
        reason: UpdateReason,
        timestamp: u64,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(UPDATE_DOMAIN)
            .raw(current_pu.as_bytes())
            .raw(new_pu.as_bytes())
            .bytes(identity_proof)
            .u8(reason.to_byte())
            .u64(timestamp);
        w.finish()
    }

    pub fn new(
        current: &PrivateKey,
        current_pu: PublicKey,
        new_pu: PublicKey,
        identity_proof: Vec<u8>,
        reason: UpdateReason,
        timestamp: u64,
    ) -> Self {
        let sig = sign(current, &Self::body(&current_pu, &new_pu, &identity_proof, reason, timestamp));
        Self { current_pu, new_pu, identity_proof, reason, timestamp, sig }
    }

    pub fn signature_valid(&self) -> bool {
        let body = Self::body(&self.current_pu, &self.new_pu, &self.identity_proof, self.reason, self.timestamp);
        verify(&self.current_pu, &body, &self.sig)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(self.current_pu.as_bytes())
            .raw(self.new_pu.as_bytes())
            .bytes(&self.identity_proof)
            .u8(self.reason.to_byte())
            .u64(self.timestamp)
            .raw(self.sig.as_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let req = Self {
            current_pu: PublicKey::from_bytes(r.array()?),
            new_pu: PublicKey::from_bytes(r.array()?),
            identity_proof: r.bytes()?.to_vec(),
            reason: UpdateReason::from_byte(r.u8()?).ok_or_else(|| r.invalid("update reason"))?,
            timestamp: r.u64()?,
            sig: Signature::from_bytes(r.array()?),
        };
        r.finish()?;
        Ok(req)
    }
}

/// An update request as it travels over the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedUpdateRequest(pub SealedBox);

/// A broadcast message with its sender's signature.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SignedMessage {
    pub message: Message,
    pub signature: Signature,
}

impl SignedMessage {
    fn signing_bytes(message: &Message) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(MSG_DOMAIN);
        message.encode(&mut w);
        w.finish()
    }

    pub fn new(signer: &PrivateKey, message: Message) -> Self {
        let signature = sign(signer, &Self::signing_bytes(&message));
        Self { message, signature }
    }

    pub fn signature_valid(&self) -> bool {
        verify(self.message.sender(), &Self::signing_bytes(&self.message), &self.signature)
    }

    pub fn encode(&self, w: &mut Writer) {
        self.message.encode(w);
        w.raw(self.signature.as_bytes());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self { message: Message::decode(r)?, signature: Signature::from_bytes(r.array()?) })
    }
}

/// Renders any protocol message as field-named text for debugging.
pub fn render<T: serde::Serialize>(message: &T) -> String {
    serde_json::to_string_pretty(message).expect("protocol types serialize infallibly")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigcrypt::keygen;

    #[test]
    fn certificate_size_and_round_trip() {
        let ca = keygen([1; 32]);
        let lea = keygen([2; 32]);
        let v = keygen([3; 32]);
        let body = certificate_body(&v.public, 50.0, 1000);
        let cert = Certificate {
            pu_ca: ca.public,
            sig_ca: sign(&ca.private, &body),
            pu_lea: lea.public,
            sig_lea: sign(&lea.private, &body),
            pu_vehicle: v.public,
            reputation: 50.0,
            expiry: 1000,
        };
        assert!(cert.signatures_valid());
        let bytes = cert.to_bytes();
        assert_eq!(bytes.len(), CERTIFICATE_LEN);
        let mut r = Reader::new(&bytes);
        assert_eq!(Certificate::decode(&mut r).unwrap(), cert);

        let mut bumped = cert.clone();
        bumped.reputation = 99.0;
        assert!(!bumped.signatures_valid());
        assert!(render(&cert).contains("\"pu_vehicle\""));
    }

    #[test]
    fn update_request_round_trip() {
        let old = keygen([4; 32]);
        let new = keygen([5; 32]);
        let req = UpdateRequest::new(&old.private, old.public, new.public, b"id".to_vec(), UpdateReason::Privacy, 7);
        assert!(req.signature_valid());
        assert_eq!(UpdateRequest::from_bytes(&req.to_bytes()).unwrap(), req);
        let forged = UpdateRequest::new(&new.private, old.public, new.public, b"id".to_vec(), UpdateReason::Privacy, 7);
        assert!(!forged.signature_valid());
    }
}
