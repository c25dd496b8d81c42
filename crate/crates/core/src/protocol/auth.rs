use super::messages::{Certificate, SignedMessage, CERTIFICATE_LEN};
use super::ProtocolError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::ledger::{Chain, Record};
use crate::merkleproofs::{verify_absence, verify_presence, AbsenceProof, PresenceProof};
use crate::sigcrypt::Digest;

/// Certificate plus the two proofs a receiver needs to accept its key.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AuthPacket {
    pub certificate: Certificate,
    /// CerBC height whose committed root the presence proof is against.
    pub cerbc_height: u32,
    pub presence: PresenceProof,
    /// RevBC height whose committed root the absence proof is against.
    pub revbc_height: u32,
    pub absence: AbsenceProof,
}

impl AuthPacket {
    /// Bytes on the wire beyond the certificate and the two proofs.
    pub const FRAMING_LEN: usize = 4 + 4;

    pub fn encoded_len(&self) -> usize {
        CERTIFICATE_LEN + Self::FRAMING_LEN + self.presence.encoded_len() + self.absence.encoded_len()
    }

    pub fn encode(&self, w: &mut Writer) {
        self.certificate.encode(w);
        w.u32(self.cerbc_height);
        self.presence.encode(w);
        w.u32(self.revbc_height);
        self.absence.encode(w);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self {
            certificate: Certificate::decode(&mut r)?,
            cerbc_height: r.u32()?,
            presence: PresenceProof::decode(&mut r)?,
            revbc_height: r.u32()?,
            absence: AbsenceProof::decode(&mut r)?,
        };
        r.finish()?;
        Ok(p)
    }
}

/// Builds a packet for `certificate` against the current tips of both chains.
pub fn build_auth_packet(certificate: &Certificate, cerbc: &Chain, revbc: &Chain) -> Result<AuthPacket, ProtocolError> {
    let record = Record::Certificate(certificate.clone());
    let index = cerbc.leaf_index(&record).ok_or(ProtocolError::NotOnChain)?;
    let presence = cerbc
        .append_tree()
        .ok_or(ProtocolError::NotOnChain)?
        .prove_presence(index)
        .map_err(|_| ProtocolError::NotOnChain)?;
    let absence = revbc
        .lex_tree()
        .ok_or(ProtocolError::NotOnChain)?
        .prove_absence(&certificate.pu_vehicle)
        .map_err(ProtocolError::Revoked)?;
    Ok(AuthPacket {
        certificate: certificate.clone(),
        cerbc_height: cerbc.height() as u32,
        presence,
        revbc_height: revbc.height() as u32,
        absence,
    })
}

/// Roots and clock a receiver checks a packet against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuthContext {
    pub cerbc_root: Digest,
    pub revbc_root: Digest,
    /// Simulated milliseconds.
    pub now: u64,
}

impl AuthContext {
    /// Presence is checked against the root committed at the packet's stated
    /// CerBC height (CerBC only grows, so older roots stay meaningful).
    /// Absence is always checked against the latest RevBC root.
    pub fn for_packet(packet: &AuthPacket, cerbc: &Chain, revbc: &Chain, now: u64) -> Option<Self> {
        Some(Self {
            cerbc_root: cerbc.root_at(packet.cerbc_height as usize)?,
            revbc_root: revbc.state_root(),
            now,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Expired,
    Signature,
    Presence,
    Absence,
    /// The packet's key is not the message sender.
    SenderMismatch,
    MessageSignature,
    Stale,
}

/// Accepts iff the certificate is unexpired, carries valid CA and LEA
/// signatures, is present in CerBC and its key is absent from RevBC. The
/// first failing check is reported.
pub fn authenticate(packet: &AuthPacket, ctx: &AuthContext) -> Result<(), RejectReason> {
    let cert = &packet.certificate;
    if ctx.now >= cert.expiry {
        return Err(RejectReason::Expired);
    }
    if !cert.signatures_valid() {
        return Err(RejectReason::Signature);
    }
    if !verify_presence(&ctx.cerbc_root, &cert.to_bytes(), &packet.presence) {
        return Err(RejectReason::Presence);
    }
    if !verify_absence(&ctx.revbc_root, &cert.pu_vehicle, &packet.absence) {
        return Err(RejectReason::Absence);
    }
    Ok(())
}

/// Authenticates the sender, then checks the message signature and
/// freshness. Accepted messages are ready to be recorded in MesBC.
pub fn verify_broadcast(
    msg: &SignedMessage,
    packet: &AuthPacket,
    ctx: &AuthContext,
    freshness_ms: u64,
) -> Result<(), RejectReason> {
    authenticate(packet, ctx)?;
    if msg.message.sender() != &packet.certificate.pu_vehicle {
        return Err(RejectReason::SenderMismatch);
    }
    if !msg.signature_valid() {
        return Err(RejectReason::MessageSignature);
    }
    let ts = msg.message.timestamp();
    if ctx.now.saturating_sub(ts) > freshness_ms || ts.saturating_sub(ctx.now) > freshness_ms {
        return Err(RejectReason::Stale);
    }
    Ok(())
}
