use std::collections::{BTreeMap, HashMap};

use super::messages::{
    certificate_body, revocation_body, Certificate, RevocationMessage, RevocationOrder, SealedUpdateRequest,
    UpdateRequest, Warrant,
};
use super::{ProtocolError, DEFAULT_CERT_VALIDITY_MS};
use crate::ledger::TrustAnchors;
use crate::reputation::{
    judge_event, AlertMessage, DisclosureMessage, EventContext, Judgment, ReputationError, ReputationParams,
    ReputationRecord, Verdict,
};
use crate::sigcrypt::{sign, verify, EnvelopeKey, EnvelopeKeyPair, KeyPair, PublicKey};

/// Identity material presented at registration. Real document checks are
/// out of scope; `valid` stands in for their outcome.
#[derive(Clone, Debug)]
pub struct IdentityProof {
    pub material: Vec<u8>,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyHistoryEntry {
    pub pu: PublicKey,
    pub issued: u64,
    pub revoked: Option<u64>,
}

/// Links a real identity to every key it has held. Lives only inside the LEA.
#[derive(Clone, Debug)]
pub struct IdentityRecord {
    pub real_identity: Vec<u8>,
    pub key_history: Vec<KeyHistoryEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationReason {
    KeyReplaced,
    Misbehavior,
    Compromised,
}

/// Law enforcement authority: registration, warrants, identity database,
/// revocation orders and reputation.
#[derive(Debug)]
pub struct Lea {
    keys: KeyPair,
    envelope: EnvelopeKeyPair,
    identities: Vec<IdentityRecord>,
    reputation: Vec<ReputationRecord>,
    by_key: HashMap<PublicKey, usize>,
    pub cert_validity_ms: u64,
}

impl Lea {
    pub fn new(keys: KeyPair, envelope: EnvelopeKeyPair) -> Self {
        Self {
            keys,
            envelope,
            identities: Vec::new(),
            reputation: Vec::new(),
            by_key: HashMap::new(),
            cert_validity_ms: DEFAULT_CERT_VALIDITY_MS,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public
    }

    pub fn envelope_key(&self) -> EnvelopeKey {
        self.envelope.public
    }

    /// Resolves any key the vehicle has ever held to its real identity.
    pub fn lookup(&self, pu: &PublicKey) -> Option<&[u8]> {
        self.by_key.get(pu).map(|&i| self.identities[i].real_identity.as_slice())
    }

    pub fn identity_record(&self, pu: &PublicKey) -> Option<&IdentityRecord> {
        self.by_key.get(pu).map(|&i| &self.identities[i])
    }

    pub fn identities(&self) -> &[IdentityRecord] {
        &self.identities
    }

    pub fn reputation_record(&self, pu: &PublicKey) -> Option<&ReputationRecord> {
        self.by_key.get(pu).map(|&i| &self.reputation[i])
    }

    pub fn reputation_records(&self) -> &[ReputationRecord] {
        &self.reputation
    }

    pub fn score(&self, pu: &PublicKey) -> Option<f64> {
        self.reputation_record(pu).map(|r| r.score)
    }

    /// True iff `pu` is the latest, unrevoked key of a registered vehicle.
    pub fn is_active(&self, pu: &PublicKey) -> bool {
        self.identity_record(pu)
            .and_then(|r| r.key_history.iter().find(|k| k.pu == *pu))
            .is_some_and(|k| k.revoked.is_none())
    }

    fn warrant(&self, subject_pu: PublicKey, reputation: f64, now: u64) -> Warrant {
        Warrant::new(&self.keys.private, subject_pu, reputation, now + self.cert_validity_ms)
    }

    fn revocation_order(&self, pu_rev: PublicKey, t_rev: u64) -> RevocationOrder {
        RevocationOrder { pu_rev, t_rev, sig_lea: sign(&self.keys.private, &revocation_body(&pu_rev, t_rev)) }
    }

    /// Applies one reputation evaluation to the live scores. Keys are
    /// resolved to vehicles internally, so a vehicle keeps its score across
    /// pseudonym changes.
    pub fn judge(
        &mut self,
        alerts: &[AlertMessage],
        disclosures: &[DisclosureMessage],
        ctx: &EventContext,
        verdict: Verdict,
        params: &ReputationParams,
        now: u64,
    ) -> Result<Judgment, ReputationError> {
        let scores: BTreeMap<PublicKey, f64> = alerts
            .iter()
            .map(|a| a.sender_pu)
            .chain(disclosures.iter().map(|d| d.discloser_pu))
            .filter_map(|pu| self.score(&pu).map(|s| (pu, s)))
            .collect();
        let judgment = judge_event(alerts, disclosures, ctx, verdict, &scores, params)?;
        if let Judgment::Applied(updates) = &judgment {
            for u in updates {
                let idx = self.by_key[&u.pu];
                let rec = &mut self.reputation[idx];
                let cause = serde_json::to_value(u.cause).ok().and_then(|v| v.as_str().map(str::to_owned));
                rec.set(now, rec.score + u.delta(), cause.unwrap_or_default());
            }
        }
        Ok(judgment)
    }
}

/// What the CA has been told, in order. Used to audit that the CA never
/// learns which keys belong together.
#[derive(Clone, Debug, PartialEq)]
pub enum CaInput {
    Warrant(Warrant),
    Revocation(RevocationOrder),
}

impl CaInput {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            CaInput::Warrant(w) => w.to_bytes(),
            CaInput::Revocation(r) => r.to_bytes(),
        }
    }
}

#[derive(Debug)]
pub struct Ca {
    keys: KeyPair,
    pu_lea: PublicKey,
    transcript: Vec<CaInput>,
}

impl Ca {
    pub fn new(keys: KeyPair, pu_lea: PublicKey) -> Self {
        Self { keys, pu_lea, transcript: Vec::new() }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public
    }

    pub fn anchors(&self) -> TrustAnchors {
        TrustAnchors { ca: self.keys.public, lea: self.pu_lea }
    }

    pub fn transcript(&self) -> &[CaInput] {
        &self.transcript
    }

    pub fn issue(&mut self, warrant: Warrant) -> Result<Certificate, ProtocolError> {
        self.transcript.push(CaInput::Warrant(warrant.clone()));
        if !warrant.verify(&self.pu_lea) {
            return Err(ProtocolError::BadWarrant);
        }
        let body = certificate_body(&warrant.subject_pu, warrant.reputation, warrant.expiry);
        Ok(Certificate {
            pu_ca: self.keys.public,
            sig_ca: sign(&self.keys.private, &body),
            pu_lea: self.pu_lea,
            sig_lea: warrant.sig_lea,
            pu_vehicle: warrant.subject_pu,
            reputation: warrant.reputation,
            expiry: warrant.expiry,
        })
    }

    pub fn revoke(&mut self, order: RevocationOrder) -> Result<RevocationMessage, ProtocolError> {
        self.transcript.push(CaInput::Revocation(order.clone()));
        let body = revocation_body(&order.pu_rev, order.t_rev);
        if !verify(&self.pu_lea, &body, &order.sig_lea) {
            return Err(ProtocolError::BadWarrant);
        }
        Ok(RevocationMessage {
            pu_ca: self.keys.public,
            sig_ca: sign(&self.keys.private, &body),
            pu_lea: self.pu_lea,
            sig_lea: order.sig_lea,
            pu_rev: order.pu_rev,
            t_rev: order.t_rev,
        })
    }
}

/// Enrolls a vehicle and issues its first certificate. The certificate still
/// has to be recorded in CerBC by the roadside units.
pub fn register(
    lea: &mut Lea,
    ca: &mut Ca,
    identity: &IdentityProof,
    initial_pu: PublicKey,
    now: u64,
) -> Result<Certificate, ProtocolError> {
    if !identity.valid {
        return Err(ProtocolError::InvalidIdentity);
    }
    if lea.by_key.contains_key(&initial_pu) {
        return Err(ProtocolError::DuplicateKey(initial_pu.fingerprint()));
    }
    let rep = ReputationRecord::new(initial_pu, now);
    let warrant = lea.warrant(initial_pu, rep.score, now);
    let cert = ca.issue(warrant)?;

    let idx = lea.identities.len();
    lea.identities.push(IdentityRecord {
        real_identity: identity.material.clone(),
        key_history: vec![KeyHistoryEntry { pu: initial_pu, issued: now, revoked: None }],
    });
    lea.reputation.push(rep);
    lea.by_key.insert(initial_pu, idx);
    Ok(cert)
}

/// Handles a sealed update request: issues a certificate for the new key
/// carrying the vehicle's live score, then revokes the old key. The CA sees
/// the two steps as unrelated messages.
pub fn update_certificate(
    lea: &mut Lea,
    ca: &mut Ca,
    sealed: &SealedUpdateRequest,
    now: u64,
) -> Result<(Certificate, RevocationMessage), ProtocolError> {
    let plain = lea.envelope.open(&sealed.0).ok_or(ProtocolError::Undecryptable)?;
    let req = UpdateRequest::from_bytes(&plain).map_err(|_| ProtocolError::Malformed)?;
    if !req.signature_valid() {
        return Err(ProtocolError::BadSignature);
    }
    let idx = *lea.by_key.get(&req.current_pu).ok_or_else(|| ProtocolError::UnknownKey(req.current_pu.fingerprint()))?;
    if !lea.is_active(&req.current_pu) {
        return Err(ProtocolError::AlreadyRevoked(req.current_pu.fingerprint()));
    }
    if lea.by_key.contains_key(&req.new_pu) {
        return Err(ProtocolError::DuplicateKey(req.new_pu.fingerprint()));
    }

    let score = lea.reputation[idx].score;
    let cert = ca.issue(lea.warrant(req.new_pu, score, now))?;

    lea.by_key.insert(req.new_pu, idx);
    lea.identities[idx].key_history.push(KeyHistoryEntry { pu: req.new_pu, issued: now, revoked: None });
    lea.reputation[idx].pu_owner = req.new_pu;

    let rev = revoke_key(lea, ca, req.current_pu, now, RevocationReason::KeyReplaced)?;
    Ok((cert, rev))
}

/// Revokes a key that no vehicle holds. A RevBC with only a handful of
/// entries would make the two neighbours quoted by an absence proof belong
/// to the same vehicle far too often; cover entries keep it populated.
pub fn cover_revocation(lea: &Lea, ca: &mut Ca, pu_rev: PublicKey, t_rev: u64) -> Result<RevocationMessage, ProtocolError> {
    if lea.by_key.contains_key(&pu_rev) {
        return Err(ProtocolError::DuplicateKey(pu_rev.fingerprint()));
    }
    ca.revoke(lea.revocation_order(pu_rev, t_rev))
}

/// Orders revocation of a currently valid key and returns the doubly signed
/// message for the roadside units.
pub fn revoke_key(
    lea: &mut Lea,
    ca: &mut Ca,
    pu_rev: PublicKey,
    t_rev: u64,
    _reason: RevocationReason,
) -> Result<RevocationMessage, ProtocolError> {
    let idx = *lea.by_key.get(&pu_rev).ok_or_else(|| ProtocolError::UnknownKey(pu_rev.fingerprint()))?;
    if !lea.is_active(&pu_rev) {
        return Err(ProtocolError::AlreadyRevoked(pu_rev.fingerprint()));
    }
    let msg = ca.revoke(lea.revocation_order(pu_rev, t_rev))?;
    let entry = lea.identities[idx]
        .key_history
        .iter_mut()
        .find(|k| k.pu == pu_rev)
        .expect("indexed keys have history");
    entry.revoked = Some(t_rev);
    Ok(msg)
}
