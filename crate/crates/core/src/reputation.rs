//! Message taxonomy and the reward/penalty reputation update run by the
//! enforcement authority once per alert event.

use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::sigcrypt::PublicKey;

/// Average traffic density in vehicles per km.
pub const D_AVER: f64 = 20.0;
pub const INITIAL_SCORE: f64 = 50.0;
pub const MIN_SCORE: f64 = 0.0;
pub const MAX_SCORE: f64 = 100.0;

/// Scale applied to the penalty for a disclosure that turned out false.
pub const FALSE_DISCLOSURE_WEIGHT: f64 = 25.0;
/// Scale applied to the reward for a disclosure that exposed a forgery.
pub const TRUE_DISCLOSURE_WEIGHT: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ReputationError {
    #[error("alert level must be 1, 2 or 3, got {0}")]
    InvalidLevel(u8),
    #[error("relative density must be positive, got {0}")]
    InvalidDensity(f64),
    #[error("coefficient must be positive, got {0}")]
    InvalidCoefficient(f64),
    #[error("an event needs at least one alert")]
    NoAlerts,
}

/// Criticality of an alert: 1 loss of control, 2 driving-status change,
/// 3 road condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AlertLevel(u8);

impl AlertLevel {
    pub const LOSS_OF_CONTROL: AlertLevel = AlertLevel(1);
    pub const STATUS_CHANGE: AlertLevel = AlertLevel(2);
    pub const ROAD_CONDITION: AlertLevel = AlertLevel(3);

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for AlertLevel {
    type Error = ReputationError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1..=3 => Ok(AlertLevel(v)),
            _ => Err(ReputationError::InvalidLevel(v)),
        }
    }
}

impl From<AlertLevel> for u8 {
    fn from(l: AlertLevel) -> u8 {
        l.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReputationParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self { alpha: 0.05, beta: 0.1 }
    }
}

impl ReputationParams {
    pub fn validate(&self) -> Result<(), ReputationError> {
        for c in [self.alpha, self.beta] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ReputationError::InvalidCoefficient(c));
            }
        }
        Ok(())
    }
}

fn base_factor(level: AlertLevel, seq: u32, density_ratio: f64, coeff: f64) -> Result<f64, ReputationError> {
    if !(density_ratio > 0.0 && density_ratio.is_finite()) {
        return Err(ReputationError::InvalidDensity(density_ratio));
    }
    if !(coeff > 0.0 && coeff.is_finite()) {
        return Err(ReputationError::InvalidCoefficient(coeff));
    }
    Ok(coeff * density_ratio / ((seq as f64).exp() * level.0 as f64))
}

/// `alpha * D_r / (e^S * L)`.
pub fn reward(level: AlertLevel, seq: u32, density_ratio: f64, alpha: f64) -> Result<f64, ReputationError> {
    base_factor(level, seq, density_ratio, alpha)
}

/// `-beta * D_r / (e^S * L)`.
pub fn penalty(level: AlertLevel, seq: u32, density_ratio: f64, beta: f64) -> Result<f64, ReputationError> {
    base_factor(level, seq, density_ratio, beta).map(|v| -v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisclosureClaim {
    Forged,
    Misbehavior,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AlertMessage {
    pub level: AlertLevel,
    pub event_id: u64,
    pub sender_pu: PublicKey,
    pub timestamp: u64,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DisclosureMessage {
    pub disputed_event_id: u64,
    pub discloser_pu: PublicKey,
    pub timestamp: u64,
    pub claim: DisclosureClaim,
}

/// Nominal size of a beacon's driving-status payload.
pub const BEACON_PAYLOAD_LEN: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BeaconMessage {
    pub sender_pu: PublicKey,
    pub status: Vec<u8>,
    pub timestamp: u64,
}

/// Any message a vehicle can sign and broadcast.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Beacon(BeaconMessage),
    Alert(AlertMessage),
    Disclosure(DisclosureMessage),
}

impl Message {
    pub fn sender(&self) -> &PublicKey {
        match self {
            Message::Beacon(m) => &m.sender_pu,
            Message::Alert(m) => &m.sender_pu,
            Message::Disclosure(m) => &m.discloser_pu,
        }
    }

    pub fn timestamp(&self) -> u64 {
        match self {
            Message::Beacon(m) => m.timestamp,
            Message::Alert(m) => m.timestamp,
            Message::Disclosure(m) => m.timestamp,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Beacon(_) => "beacon",
            Message::Alert(_) => "alert",
            Message::Disclosure(_) => "disclosure",
        }
    }

    /// Canonical bytes; this is what the sender signs.
    pub fn encode(&self, w: &mut Writer) {
        match self {
            Message::Beacon(m) => {
                w.u8(1).raw(m.sender_pu.as_bytes()).u64(m.timestamp).bytes(&m.status);
            }
            Message::Alert(m) => {
                w.u8(2)
                    .raw(m.sender_pu.as_bytes())
                    .u64(m.timestamp)
                    .u8(m.level.0)
                    .u64(m.event_id)
                    .bytes(&m.payload);
            }
            Message::Disclosure(m) => {
                let claim = match m.claim {
                    DisclosureClaim::Forged => 1,
                    DisclosureClaim::Misbehavior => 2,
                };
                w.u8(3).raw(m.discloser_pu.as_bytes()).u64(m.timestamp).u64(m.disputed_event_id).u8(claim);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let tag = r.u8()?;
        let pu = PublicKey::from_bytes(r.array()?);
        let timestamp = r.u64()?;
        Ok(match tag {
            1 => Message::Beacon(BeaconMessage { sender_pu: pu, timestamp, status: r.bytes()?.to_vec() }),
            2 => {
                let level = AlertLevel::try_from(r.u8()?).map_err(|_| r.invalid("alert level"))?;
                let event_id = r.u64()?;
                Message::Alert(AlertMessage { level, event_id, sender_pu: pu, timestamp, payload: r.bytes()?.to_vec() })
            }
            3 => {
                let disputed_event_id = r.u64()?;
                let claim = match r.u8()? {
                    1 => DisclosureClaim::Forged,
                    2 => DisclosureClaim::Misbehavior,
                    _ => return Err(r.invalid("disclosure claim")),
                };
                Message::Disclosure(DisclosureMessage { disputed_event_id, discloser_pu: pu, timestamp, claim })
            }
            _ => return Err(r.invalid("message type")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventContext {
    pub level: AlertLevel,
    /// Vehicles per km around the event.
    pub density: f64,
}

impl EventContext {
    pub fn density_ratio(&self) -> f64 {
        self.density / D_AVER
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Authentic,
    Forged,
}

/// Ranks participants by first timestamp, 0 for the earliest. Equal
/// timestamps fall back to key byte order. Repeat appearances keep their
/// first rank.
pub fn assign_sequences(items: impl IntoIterator<Item = (PublicKey, u64)>) -> BTreeMap<PublicKey, u32> {
    let mut first: BTreeMap<PublicKey, u64> = BTreeMap::new();
    for (pu, ts) in items {
        first.entry(pu).and_modify(|t| *t = (*t).min(ts)).or_insert(ts);
    }
    let mut ordered: Vec<(u64, PublicKey)> = first.into_iter().map(|(pu, ts)| (ts, pu)).collect();
    ordered.sort();
    ordered.into_iter().enumerate().map(|(i, (_, pu))| (pu, i as u32)).collect()
}

pub fn alert_sequences(alerts: &[AlertMessage]) -> BTreeMap<PublicKey, u32> {
    assign_sequences(alerts.iter().map(|a| (a.sender_pu, a.timestamp)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    /// Undisputed alert.
    AlertRewarded,
    /// Disputed alert judged authentic.
    AlertUpheld,
    /// Disclosure against an authentic alert.
    FalseDisclosure,
    /// Sender of a forged alert.
    ForgedAlert,
    /// Disclosure that exposed a forged alert.
    TrueDisclosure,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreUpdate {
    pub pu: PublicKey,
    pub before: f64,
    pub after: f64,
    pub cause: Cause,
}

impl ScoreUpdate {
    pub fn delta(&self) -> f64 {
        self.after - self.before
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Judgment {
    /// Updates in application order.
    Applied(Vec<ScoreUpdate>),
    /// A participant has no score on record; nothing was changed.
    Deferred { unknown: PublicKey },
}

fn clamp(score: f64) -> f64 {
    score.clamp(MIN_SCORE, MAX_SCORE)
}

/// Runs one reputation evaluation for an alert event and returns the
/// resulting updates. `scores` is not modified.
///
/// Forged-alert senders are penalized with their own sequence number.
pub fn judge_event(
    alerts: &[AlertMessage],
    disclosures: &[DisclosureMessage],
    ctx: &EventContext,
    verdict: Verdict,
    scores: &BTreeMap<PublicKey, f64>,
    params: &ReputationParams,
) -> Result<Judgment, ReputationError> {
    if alerts.is_empty() {
        return Err(ReputationError::NoAlerts);
    }
    params.validate()?;
    let dr = ctx.density_ratio();
    if !(dr > 0.0 && dr.is_finite()) {
        return Err(ReputationError::InvalidDensity(dr));
    }

    let senders = alert_sequences(alerts);
    let disclosers = assign_sequences(disclosures.iter().map(|d| (d.discloser_pu, d.timestamp)));
    if let Some(pu) = senders.keys().chain(disclosers.keys()).find(|pu| !scores.contains_key(pu)) {
        return Ok(Judgment::Deferred { unknown: *pu });
    }

    let mut working = scores.clone();
    let mut updates = Vec::new();
    let mut apply = |pu: &PublicKey, cause: Cause, f: &dyn Fn(f64) -> f64| {
        let before = working[pu];
        let after = clamp(f(before));
        working.insert(*pu, after);
        updates.push(ScoreUpdate { pu: *pu, before, after, cause });
    };

    // Senders in sequence order, then disclosers in sequence order.
    let by_seq = |m: &BTreeMap<PublicKey, u32>| {
        let mut v: Vec<(u32, PublicKey)> = m.iter().map(|(k, s)| (*s, *k)).collect();
        v.sort();
        v
    };

    if disclosers.is_empty() || verdict == Verdict::Authentic {
        let cause = if disclosers.is_empty() { Cause::AlertRewarded } else { Cause::AlertUpheld };
        for (s, pu) in by_seq(&senders) {
            let r = reward(ctx.level, s, dr, params.alpha)?;
            apply(&pu, cause, &|x| x + (MAX_SCORE - x) * r);
        }
        for (s, pu) in by_seq(&disclosers) {
            let p = penalty(ctx.level, s, dr, params.beta)?;
            apply(&pu, Cause::FalseDisclosure, &|x| x + FALSE_DISCLOSURE_WEIGHT * p);
        }
    } else {
        for (s, pu) in by_seq(&senders) {
            let p = penalty(ctx.level, s, dr, params.beta)?;
            apply(&pu, Cause::ForgedAlert, &|x| x * (1.0 + p));
        }
        for (s, pu) in by_seq(&disclosers) {
            let r = reward(ctx.level, s, dr, params.alpha)?;
            apply(&pu, Cause::TrueDisclosure, &|x| x + TRUE_DISCLOSURE_WEIGHT * r);
        }
    }
    Ok(Judgment::Applied(updates))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HistoryEntry {
    pub time: u64,
    pub pseudonym: PublicKey,
    pub score: f64,
    pub delta: f64,
    pub cause: String,
}

/// A vehicle's live score as held by the enforcement authority.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReputationRecord {
    pub pu_owner: PublicKey,
    pub score: f64,
    pub history: Vec<HistoryEntry>,
}

impl ReputationRecord {
    pub fn new(pu_owner: PublicKey, time: u64) -> Self {
        Self {
            pu_owner,
            score: INITIAL_SCORE,
            history: vec![HistoryEntry {
                time,
                pseudonym: pu_owner,
                score: INITIAL_SCORE,
                delta: 0.0,
                cause: "registered".into(),
            }],
        }
    }

    pub fn set(&mut self, time: u64, score: f64, cause: impl Into<String>) {
        let score = clamp(score);
        let delta = score - self.score;
        self.score = score;
        self.history.push(HistoryEntry { time, pseudonym: self.pu_owner, score, delta, cause: cause.into() });
    }
}

/// Writes `time,pseudonym,score,delta,cause` rows for every history entry.
pub fn write_history_csv<'a, W: io::Write>(
    out: W,
    records: impl IntoIterator<Item = &'a ReputationRecord>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "pseudonym", "score", "delta", "cause"])?;
    for rec in records {
        for h in &rec.history {
            w.write_record([
                h.time.to_string(),
                h.pseudonym.fingerprint(),
                format!("{:.6}", h.score),
                format!("{:.6}", h.delta),
                h.cause.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
