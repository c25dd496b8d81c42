//! Deterministic discrete-event simulation of a full deployment.
//!
//! All state lives on one thread. Actions sit in a queue ordered by
//! `(time ms, actor, insertion seq)`; actor 0 is the infrastructure (RSUs
//! and LEA), vehicles follow in declaration order. The only randomness is a
//! ChaCha8 stream seeded from the scenario, drawn in queue order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scenario::{hours_to_ms, Role, Scenario, ScenarioError};
use crate::ledger::{load_chain, save_chain, Chain, LedgerError, Record};
use crate::merkleproofs::PresenceProof;
use crate::protocol::messages::certificate_body;
use crate::protocol::{
    cover_revocation, register, revoke_key, update_certificate, verify_broadcast, AuthContext, AuthPacket, Ca, CaInput, Certificate,
    IdentityProof, Lea, ProtocolError, RejectReason, RevocationReason, RoadsideUnits, SignedMessage, UpdateReason,
    Vehicle,
};
use crate::reputation::{
    AlertLevel, AlertMessage, BeaconMessage, DisclosureClaim, DisclosureMessage, EventContext, Judgment, Message,
    ReputationError, ScoreUpdate, Verdict, BEACON_PAYLOAD_LEN,
};
use crate::sigcrypt::{hash_parts, keygen, sign, EnvelopeKeyPair, PublicKey, Signature};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("reputation: {0}")]
    Reputation(#[from] ReputationError),
}

/// Half-width of the road segment used to measure local density.
pub const DENSITY_HALF_WIDTH_KM: f64 = 0.5;

const INFRA: u32 = 0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpdateView {
    pub vehicle: String,
    pub pseudonym: PublicKey,
    pub before: f64,
    pub after: f64,
    pub cause: crate::reputation::Cause,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered { pseudonym: PublicKey },
    RegistrationRefused { reason: String },
    BlockSealed { chain: &'static str, height: usize, records: usize, rejected: usize, committed: bool },
    Broadcast {
        kind: &'static str,
        pseudonym: PublicKey,
        event_id: Option<u64>,
        delivered: usize,
        verdict: Option<RejectReason>,
        recorded: bool,
    },
    BroadcastSkipped { kind: &'static str, reason: String },
    Emergency { event_id: u64, level: u8, position_km: f64, witnesses: usize },
    Judgment { event_id: u64, verdict: Verdict, density: f64, alerts: usize, disclosures: usize, updates: Vec<UpdateView> },
    JudgmentDeferred { event_id: u64, unknown: PublicKey },
    KeyUpdateRequested { reason: UpdateReason },
    KeyUpdated { pseudonym: PublicKey },
    UpdateRefused { reason: String },
    Revoked { pseudonym: PublicKey },
    CoverRevocations { count: usize },
    RevocationRefused { reason: String },
    LateEvidence { event_id: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub seq: u64,
    pub time_ms: u64,
    pub actor: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    fn push(&mut self, time_ms: u64, actor: &str, event: Event) {
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry { seq, time_ms, actor: actor.to_owned(), event });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn is_chronological(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].time_ms <= w[1].time_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScorePoint {
    pub time_ms: u64,
    pub vehicle: String,
    pub pseudonym: PublicKey,
    pub score: f64,
    pub delta: f64,
    pub cause: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProbeResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub broadcasts: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub judgments: usize,
    pub key_updates: usize,
    pub revocations: usize,
    pub cover_revocations: usize,
    /// Broadcasts withheld because RevBC expiry put an old key of the
    /// sender next to its current one.
    pub privacy_holds: usize,
}

#[derive(Debug)]
pub struct SimOutput {
    pub log: EventLog,
    pub scores: Vec<ScorePoint>,
    pub probes: Vec<ProbeResult>,
    pub stats: RunStats,
    pub rsus: RoadsideUnits,
    pub lea: Lea,
    pub ca: Ca,
}

impl SimOutput {
    pub fn all_probes_pass(&self) -> bool {
        self.probes.iter().all(|p| p.passed)
    }

    /// Score series for one vehicle, in time order.
    pub fn series(&self, vehicle: &str) -> Vec<&ScorePoint> {
        self.scores.iter().filter(|p| p.vehicle == vehicle).collect()
    }

    /// `time_h,vehicle,pseudonym,score,delta,cause`.
    pub fn scores_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_h", "vehicle", "pseudonym", "score", "delta", "cause"]).expect("in-memory csv");
        for p in &self.scores {
            w.write_record([
                format!("{:.6}", p.time_ms as f64 / 3_600_000.0),
                p.vehicle.clone(),
                p.pseudonym.fingerprint(),
                format!("{:.9}", p.score),
                format!("{:.9}", p.delta),
                p.cause.clone(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn chain_files(&self) -> [(&'static str, Vec<u8>); 3] {
        [
            ("cerbc.chain", save_chain(self.rsus.cerbc())),
            ("revbc.chain", save_chain(self.rsus.revbc())),
            ("mesbc.chain", save_chain(self.rsus.mesbc())),
        ]
    }
}

#[derive(Clone, Debug)]
enum Action {
    Seal,
    Beacon,
    /// A genuine emergency, optionally first reported by the acting vehicle.
    Emergency { level: u8, position_km: f64, initiator: bool },
    Alert { event_id: u64, level: u8 },
    ForgedAlert,
    ArmSlander,
    Disclose { event_id: u64 },
    ImpostorBroadcast,
    Update,
    Revoke,
    Cover,
}

struct EventInfo {
    genuine: bool,
    level: u8,
    position_km: f64,
    judged: bool,
}

/// Everything a vehicle put on the air, kept for the unlinkability audit.
enum Transmission {
    Broadcast { packet: Box<AuthPacket>, message: SignedMessage },
    Sealed(Vec<u8>),
}

#[derive(Default)]
struct Evidence {
    alerts: Vec<AlertMessage>,
    disclosures: Vec<DisclosureMessage>,
}

struct Agent {
    name: String,
    spec: usize,
    vehicle: Vehicle,
    registered: bool,
    /// Last packet built; reused when a fresh one cannot be built.
    packet: Option<AuthPacket>,
    packet_heights: (usize, usize),
    pending_cert: Option<Certificate>,
    slander_budget: u32,
    responded: BTreeSet<u64>,
    revoked_at: Option<u64>,
    impostor_attempts: u32,
    keys: Vec<PublicKey>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u32, u64), Action>,
    seq: u64,
    now: u64,
    lea: Lea,
    ca: Ca,
    rsus: RoadsideUnits,
    agents: Vec<Agent>,
    events: BTreeMap<u64, EventInfo>,
    next_event_id: u64,
    evidence: BTreeMap<u64, Evidence>,
    mes_indexed: usize,
    log: EventLog,
    stats: RunStats,
    /// Every byte string a non-LEA party saw, other than ledger records.
    observed: Vec<Transmission>,
    /// Accepted broadcasts, for the conservation probe.
    accepted: Vec<SignedMessage>,
    consumed: Vec<Record>,
    impostor_accepted: usize,
    revoked_accepted: Vec<String>,
}

fn seed32(parts: &[&[u8]]) -> [u8; 32] {
    *hash_parts(parts).as_bytes()
}

fn ring_distance(a: f64, b: f64, road: f64) -> f64 {
    let d = (a - b).rem_euclid(road);
    d.min(road - d)
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let s = sc.seed.to_be_bytes();
        let mut lea = Lea::new(keygen(seed32(&[b"lea", &s])), EnvelopeKeyPair::from_seed(seed32(&[b"lea-env", &s])));
        lea.cert_validity_ms = hours_to_ms(sc.cert_validity_hours);
        let ca = Ca::new(keygen(seed32(&[b"ca", &s])), lea.public());
        let rsus = RoadsideUnits::new(
            ca.anchors(),
            sc.difficulty,
            hours_to_ms(sc.revocation_window_hours),
            sc.rsu_count,
        );
        let agents = sc
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let vseed = seed32(&[b"vehicle", &s, v.name.as_bytes()]);
                let identity = format!("identity:{}:{}", v.name, hex::encode(&vseed[..6])).into_bytes();
                Agent {
                    name: v.name.clone(),
                    spec: i,
                    vehicle: Vehicle::new(vseed, identity),
                    registered: false,
                    packet: None,
                    packet_heights: (usize::MAX, usize::MAX),
                    pending_cert: None,
                    slander_budget: 0,
                    responded: BTreeSet::new(),
                    revoked_at: None,
                    impostor_attempts: 0,
                    keys: Vec::new(),
                }
            })
            .collect();
        Self {
            sc,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            lea,
            ca,
            rsus,
            agents,
            events: BTreeMap::new(),
            next_event_id: 1,
            evidence: BTreeMap::new(),
            mes_indexed: 0,
            log: EventLog::default(),
            stats: RunStats::default(),
            observed: Vec::new(),
            accepted: Vec::new(),
            consumed: Vec::new(),
            impostor_accepted: 0,
            revoked_accepted: Vec::new(),
        }
    }

    fn schedule(&mut self, time: u64, actor: u32, action: Action) {
        if time <= self.sc.duration_ms() {
            self.queue.insert((time, actor, self.seq), action);
            self.seq += 1;
        }
    }

    fn position(&self, agent: usize, t: u64) -> f64 {
        let v = &self.sc.vehicles[self.agents[agent].spec];
        (v.position_km + v.speed_kmh * t as f64 / 3_600_000.0).rem_euclid(self.sc.road_km)
    }

    fn role(&self, agent: usize, t: u64) -> Option<Role> {
        self.sc.vehicles[self.agents[agent].spec].role_at(t as f64 / 3_600_000.0)
    }

    fn density_at(&self, position: f64, t: u64) -> f64 {
        let hour = t as f64 / 3_600_000.0;
        let counted = (0..self.agents.len())
            .filter(|&i| self.agents[i].registered)
            .filter(|&i| ring_distance(self.position(i, t), position, self.sc.road_km) <= DENSITY_HALF_WIDTH_KM)
            .count() as f64;
        let background: f64 =
            self.sc.density.iter().filter(|d| d.from_hour <= hour && hour < d.to_hour).map(|d| d.per_km).sum();
        // An alert implies at least its sender on the road.
        (counted + background).max(1.0)
    }

    fn plan(&mut self) {
        let sc = self.sc;
        let end = sc.duration_ms();
        let interval = sc.block_interval_s as u64 * 1000;
        let mut t = interval;
        while t <= end {
            self.schedule(t, INFRA, Action::Seal);
            t += interval;
        }
        if sc.cover_revocations > 0 {
            let every = hours_to_ms(sc.revocation_window_hours / 2.0).max(interval);
            let mut t = 0;
            while t < end {
                self.schedule(t, INFRA, Action::Cover);
                t += every;
            }
        }
        for (i, spec) in sc.vehicles.iter().enumerate() {
            let actor = i as u32 + 1;
            let beacon = sc.beacon_interval_s as u64 * 1000;
            let mut t = self.rng.gen_range(0..beacon);
            while t <= end {
                self.schedule(t, actor, Action::Beacon);
                t += beacon;
            }
            for p in &spec.phases {
                let from = hours_to_ms(p.from_hour).min(end);
                let to = hours_to_ms(p.to_hour).min(end);
                let n = (p.rate * (p.to_hour - p.from_hour)).round() as u64;
                if n == 0 || to <= from {
                    continue;
                }
                let slot = (to - from) / n;
                for k in 0..n {
                    let at = from + slot * k + (slot as f64 * self.rng.gen_range(0.2..0.8)) as u64;
                    let action = match p.role {
                        Role::Honest => Action::Emergency {
                            level: self.rng.gen_range(1..=3),
                            position_km: f64::NAN,
                            initiator: true,
                        },
                        Role::Forger => Action::ForgedAlert,
                        Role::Slanderer => Action::ArmSlander,
                        Role::Impostor => Action::ImpostorBroadcast,
                        Role::NonParticipant => continue,
                    };
                    self.schedule(at, actor, action);
                }
            }
            if sc.update_every_hours > 0.0 {
                let every = hours_to_ms(sc.update_every_hours);
                let mut t = every;
                while t <= end {
                    self.schedule(t, actor, Action::Update);
                    t += every;
                }
            }
        }
        for a in &sc.alerts {
            let action = Action::Emergency { level: a.level, position_km: a.position_km, initiator: false };
            self.schedule(hours_to_ms(a.at_hour), INFRA, action);
        }
        for u in &sc.updates {
            let actor = sc.vehicle_index(&u.vehicle).expect("validated") as u32 + 1;
            self.schedule(hours_to_ms(u.at_hour), actor, Action::Update);
        }
        for r in &sc.revocations {
            let actor = sc.vehicle_index(&r.vehicle).expect("validated") as u32 + 1;
            self.schedule(hours_to_ms(r.at_hour), actor, Action::Revoke);
        }
    }

    fn register_all(&mut self) {
        for i in 0..self.agents.len() {
            let valid = self.sc.vehicles[self.agents[i].spec].valid_identity;
            let a = &self.agents[i];
            let proof = IdentityProof { material: a.vehicle.identity().to_vec(), valid };
            let pu = a.vehicle.public();
            match register(&mut self.lea, &mut self.ca, &proof, pu, 0) {
                Ok(cert) => {
                    let a = &mut self.agents[i];
                    a.vehicle.install_certificate(cert.clone()).expect("issued for this key");
                    a.registered = true;
                    a.keys.push(pu);
                    self.rsus.submit_certificate(cert);
                    self.log.push(0, "lea", Event::Registered { pseudonym: pu });
                }
                Err(e) => {
                    let name = self.agents[i].name.clone();
                    self.log.push(0, &name, Event::RegistrationRefused { reason: e.to_string() });
                }
            }
        }
    }

    fn run(mut self) -> Result<SimOutput, SimError> {
        self.plan();
        self.register_all();
        while let Some(((time, actor, _), action)) = self.queue.pop_first() {
            self.now = time;
            self.step(actor, action)?;
        }
        // Flush whatever the last interval left pending.
        if self.rsus.pending() > 0 {
            self.now = self.sc.duration_ms();
            self.seal()?;
        }
        self.finish()
    }

    fn step(&mut self, actor: u32, action: Action) -> Result<(), SimError> {
        if actor == INFRA {
            return match action {
                Action::Seal => self.seal(),
                Action::Cover => {
                    self.cover();
                    Ok(())
                }
                Action::Emergency { level, position_km, .. } => {
                    self.emergency(None, level, position_km);
                    Ok(())
                }
                _ => unreachable!("infrastructure only seals, covers and injects emergencies"),
            };
        }
        let i = actor as usize - 1;
        if !self.agents[i].registered {
            return Ok(());
        }
        match action {
            Action::Beacon => {
                let pu = self.agents[i].vehicle.public();
                let msg = Message::Beacon(BeaconMessage {
                    sender_pu: pu,
                    status: (0..BEACON_PAYLOAD_LEN).map(|_| self.rng.gen()).collect(),
                    timestamp: self.now,
                });
                self.broadcast(i, msg, None);
            }
            Action::Emergency { level, initiator, .. } => {
                debug_assert!(initiator);
                let pos = self.position(i, self.now);
                self.emergency(Some(i), level, pos);
            }
            Action::Alert { event_id, level } => {
                let msg = self.alert_message(i, event_id, level);
                self.broadcast(i, msg, Some(event_id));
            }
            Action::ForgedAlert => {
                let level = self.rng.gen_range(1..=3);
                let event_id = self.new_event(false, level, self.position(i, self.now));
                let level = self.events[&event_id].level;
                let msg = self.alert_message(i, event_id, level);
                self.broadcast(i, msg, Some(event_id));
            }
            Action::ArmSlander => self.agents[i].slander_budget += 1,
            Action::Disclose { event_id } => {
                let msg = Message::Disclosure(DisclosureMessage {
                    disputed_event_id: event_id,
                    discloser_pu: self.agents[i].vehicle.public(),
                    timestamp: self.now,
                    claim: DisclosureClaim::Forged,
                });
                self.broadcast(i, msg, Some(event_id));
            }
            Action::ImpostorBroadcast => self.impostor(i),
            Action::Update => self.update(i),
            Action::Revoke => self.revoke(i),
            Action::Seal | Action::Cover => unreachable!("vehicles do not seal or cover"),
        }
        Ok(())
    }

    fn new_event(&mut self, genuine: bool, level: u8, position_km: f64) -> u64 {
        let id = self.next_event_id;
        self.next_event_id += 1;
        self.events.insert(id, EventInfo { genuine, level, position_km, judged: false });
        id
    }

    fn alert_message(&mut self, i: usize, event_id: u64, level: u8) -> Message {
        Message::Alert(AlertMessage {
            level: AlertLevel::try_from(level).expect("levels are generated in range"),
            event_id,
            sender_pu: self.agents[i].vehicle.public(),
            timestamp: self.now,
            payload: (0..16).map(|_| self.rng.gen()).collect(),
        })
    }

    /// Honest vehicles within radius report, nearest first.
    fn emergency(&mut self, initiator: Option<usize>, level: u8, position_km: f64) {
        let mut witnesses: Vec<(f64, usize)> = (0..self.agents.len())
            .filter(|&j| Some(j) != initiator && self.agents[j].registered)
            .filter(|&j| self.role(j, self.now) == Some(Role::Honest))
            .map(|j| (ring_distance(self.position(j, self.now), position_km, self.sc.road_km), j))
            .filter(|(d, _)| *d <= self.sc.radius_km)
            .collect();
        witnesses.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let order: Vec<usize> = initiator.into_iter().chain(witnesses.into_iter().map(|(_, j)| j)).collect();
        let event_id = self.new_event(true, level, position_km);
        let actor = initiator.map_or("infrastructure".to_owned(), |i| self.agents[i].name.clone());
        self.log.push(self.now, &actor, Event::Emergency { event_id, level, position_km, witnesses: order.len() });
        for (k, j) in order.into_iter().enumerate() {
            let delay = if k == 0 { 0 } else { k as u64 * 1000 + self.rng.gen_range(0..500) };
            self.schedule(self.now + delay, j as u32 + 1, Action::Alert { event_id, level });
        }
    }

    fn current_packet(&mut self, i: usize) -> Option<AuthPacket> {
        let heights = (self.rsus.cerbc().height(), self.rsus.revbc().height());
        let a = &mut self.agents[i];
        if a.packet_heights != heights {
            match a.vehicle.packet(self.rsus.cerbc(), self.rsus.revbc()) {
                Ok(p) => a.packet = Some(p),
                // A revoked vehicle may keep replaying its last good packet,
                // but only while it still signs with that packet's key.
                Err(_) => {
                    if a.packet.as_ref().is_some_and(|p| p.certificate.pu_vehicle != a.vehicle.public()) {
                        a.packet = None;
                    }
                }
            }
            a.packet_heights = heights;
        }
        a.packet.clone()
    }

    fn verdict(&self, signed: &SignedMessage, packet: &AuthPacket) -> Result<(), RejectReason> {
        let ctx = AuthContext::for_packet(packet, self.rsus.cerbc(), self.rsus.revbc(), self.now)
            .ok_or(RejectReason::Presence)?;
        verify_broadcast(signed, packet, &ctx, self.sc.freshness_ms)
    }

    fn receivers(&mut self, i: usize) -> Vec<usize> {
        let here = self.position(i, self.now);
        let mut out = Vec::new();
        for j in 0..self.agents.len() {
            if j == i || !self.agents[j].registered {
                continue;
            }
            if ring_distance(self.position(j, self.now), here, self.sc.road_km) > self.sc.radius_km {
                continue;
            }
            if self.sc.loss_probability > 0.0 && self.rng.gen::<f64>() < self.sc.loss_probability {
                continue;
            }
            out.push(j);
        }
        out
    }

    fn broadcast(&mut self, i: usize, msg: Message, event_id: Option<u64>) {
        let kind = msg.kind();
        let name = self.agents[i].name.clone();
        let Some(packet) = self.current_packet(i) else {
            self.log.push(self.now, &name, Event::BroadcastSkipped { kind, reason: "no usable packet".into() });
            return;
        };
        if self.agents[i].vehicle.exposes_past_key(&packet) {
            self.stats.privacy_holds += 1;
            self.log.push(self.now, &name, Event::BroadcastSkipped { kind, reason: "privacy hold".into() });
            if self.agents[i].pending_cert.is_none() && self.agents[i].revoked_at.is_none() {
                self.update(i);
            }
            return;
        }
        let signed = self.agents[i].vehicle.sign(msg);
        self.deliver(i, signed, packet, event_id, false);
    }

    fn deliver(&mut self, i: usize, signed: SignedMessage, packet: AuthPacket, event_id: Option<u64>, impostor: bool) {
        let kind = signed.message.kind();
        let pseudonym = *signed.message.sender();
        self.observed.push(Transmission::Broadcast { packet: Box::new(packet.clone()), message: signed.clone() });
        self.stats.broadcasts += 1;

        // Every receiver and the RSUs evaluate against the same chain heads.
        let verdict = self.verdict(&signed, &packet);
        let receivers = self.receivers(i);
        let accepted = verdict.is_ok();
        if accepted {
            self.stats.accepted += 1;
            self.accepted.push(signed.clone());
            self.rsus.submit_message(signed.clone());
            if impostor {
                self.impostor_accepted += 1;
            }
            if let Some(t) = self.agents[i].revoked_at {
                if self.now >= t + self.sc.block_interval_s as u64 * 1000 {
                    self.revoked_accepted.push(format!("{} at {} ms", self.agents[i].name, self.now));
                }
            }
            if let (Message::Alert(_), Some(event_id)) = (&signed.message, event_id) {
                self.react(i, event_id, &receivers);
            }
        } else {
            let reason = serde_json::to_value(verdict.unwrap_err()).ok().and_then(|v| v.as_str().map(str::to_owned));
            *self.stats.rejected.entry(reason.unwrap_or_default()).or_default() += 1;
        }
        let name = self.agents[i].name.clone();
        self.log.push(
            self.now,
            &name,
            Event::Broadcast {
                kind,
                pseudonym,
                event_id,
                delivered: receivers.len(),
                verdict: verdict.err(),
                recorded: accepted,
            },
        );
    }

    /// Receivers of an accepted alert decide whether to dispute it.
    fn react(&mut self, sender: usize, event_id: u64, receivers: &[usize]) {
        let genuine = self.events[&event_id].genuine;
        for &j in receivers {
            if j == sender || self.agents[j].responded.contains(&event_id) {
                continue;
            }
            let delay = match (genuine, self.role(j, self.now)) {
                (false, Some(Role::Honest)) => 2000 + self.rng.gen_range(0..1000),
                (true, Some(Role::Slanderer)) if self.agents[j].slander_budget > 0 => {
                    self.agents[j].slander_budget -= 1;
                    1500 + self.rng.gen_range(0..1000)
                }
                _ => continue,
            };
            self.agents[j].responded.insert(event_id);
            self.schedule(self.now + delay, j as u32 + 1, Action::Disclose { event_id });
        }
    }

    fn impostor(&mut self, i: usize) {
        let attempt = self.agents[i].impostor_attempts;
        self.agents[i].impostor_attempts += 1;
        let s = self.sc.seed.to_be_bytes();
        let name = self.agents[i].name.clone();
        let fake = keygen(seed32(&[b"impostor", &s, name.as_bytes(), &attempt.to_be_bytes()]));
        let stand_in = |tag: &[u8]| keygen(seed32(&[tag, &s, name.as_bytes()]));
        let body = certificate_body(&fake.public, 100.0, u64::MAX / 2);
        // Alternate between self-made authorities and borrowed real anchors
        // with made-up signatures.
        let cert = if attempt.is_multiple_of(2) {
            let (ca, lea) = (stand_in(b"fake-ca"), stand_in(b"fake-lea"));
            Certificate {
                pu_ca: ca.public,
                sig_ca: sign(&ca.private, &body),
                pu_lea: lea.public,
                sig_lea: sign(&lea.private, &body),
                pu_vehicle: fake.public,
                reputation: 100.0,
                expiry: u64::MAX / 2,
            }
        } else {
            let anchors = self.ca.anchors();
            Certificate {
                pu_ca: anchors.ca,
                sig_ca: sign(&fake.private, &body),
                pu_lea: anchors.lea,
                sig_lea: Signature::from_bytes([0x5A; 64]),
                pu_vehicle: fake.public,
                reputation: 100.0,
                expiry: u64::MAX / 2,
            }
        };
        let borrowed = self.current_packet(i);
        let absence = match self.rsus.revbc().lex_tree().expect("revbc").prove_absence(&fake.public) {
            Ok(a) => a,
            Err(_) => return,
        };
        let packet = AuthPacket {
            certificate: cert,
            cerbc_height: self.rsus.cerbc().height() as u32,
            presence: borrowed.map_or(PresenceProof { steps: vec![] }, |p| p.presence),
            revbc_height: self.rsus.revbc().height() as u32,
            absence,
        };
        let msg = Message::Beacon(BeaconMessage {
            sender_pu: fake.public,
            status: vec![0xEE; BEACON_PAYLOAD_LEN],
            timestamp: self.now,
        });
        let signed = SignedMessage::new(&fake.private, msg);
        self.deliver(i, signed, packet, None, true);
    }

    fn update(&mut self, i: usize) {
        let name = self.agents[i].name.clone();
        if self.agents[i].pending_cert.is_some() || self.agents[i].revoked_at.is_some() {
            self.log.push(self.now, &name, Event::UpdateRefused { reason: "update already pending or key revoked".into() });
            return;
        }
        let reason = UpdateReason::Privacy;
        let env = self.lea.envelope_key();
        let revoked = self.rsus.revbc().lex_tree();
        let sealed = self.agents[i].vehicle.request_update_avoiding(&env, reason, self.now, revoked);
        self.observed.push(Transmission::Sealed(sealed.0.to_bytes()));
        self.log.push(self.now, &name, Event::KeyUpdateRequested { reason });
        match update_certificate(&mut self.lea, &mut self.ca, &sealed, self.now) {
            Ok((cert, rev)) => {
                let pu = cert.pu_vehicle;
                self.agents[i].pending_cert = Some(cert.clone());
                self.agents[i].keys.push(pu);
                self.rsus.submit_certificate(cert);
                self.rsus.submit_revocation(rev);
                self.stats.key_updates += 1;
                self.log.push(self.now, "lea", Event::KeyUpdated { pseudonym: pu });
            }
            Err(e) => self.log.push(self.now, "lea", Event::UpdateRefused { reason: e.to_string() }),
        }
    }

    fn cover(&mut self) {
        let mut count = 0;
        for _ in 0..self.sc.cover_revocations {
            let n = self.stats.cover_revocations as u64;
            let pu = keygen(*hash_parts(&[b"cover", &self.sc.seed.to_be_bytes(), &n.to_be_bytes()]).as_bytes()).public;
            self.stats.cover_revocations += 1;
            if let Ok(rev) = cover_revocation(&self.lea, &mut self.ca, pu, self.now) {
                self.rsus.submit_revocation(rev);
                count += 1;
            }
        }
        self.log.push(self.now, "lea", Event::CoverRevocations { count });
    }

    fn revoke(&mut self, i: usize) {
        let mut targets = vec![self.agents[i].vehicle.public()];
        if let Some(c) = &self.agents[i].pending_cert {
            targets.push(c.pu_vehicle);
        }
        for pu in targets {
            match revoke_key(&mut self.lea, &mut self.ca, pu, self.now, RevocationReason::Misbehavior) {
                Ok(rev) => {
                    self.rsus.submit_revocation(rev);
                    self.stats.revocations += 1;
                    self.log.push(self.now, "lea", Event::Revoked { pseudonym: pu });
                }
                Err(ProtocolError::AlreadyRevoked(_)) => {}
                Err(e) => self.log.push(self.now, "lea", Event::RevocationRefused { reason: e.to_string() }),
            }
        }
        self.agents[i].revoked_at.get_or_insert(self.now);
    }

    fn seal(&mut self) -> Result<(), SimError> {
        let ts = (self.now / 1000) as u32;
        let report = self.rsus.seal(ts)?;
        for (chain, seal, c) in [
            ("cerbc", &report.cerbc, self.rsus.cerbc()),
            ("revbc", &report.revbc, self.rsus.revbc()),
            ("mesbc", &report.mesbc, self.rsus.mesbc()),
        ] {
            let event = Event::BlockSealed {
                chain,
                height: c.height(),
                records: seal.accepted,
                rejected: seal.rejected.len(),
                committed: seal.committed,
            };
            self.log.push(self.now, "rsu", event);
        }
        // Vehicles switch to keys whose certificates are now on chain.
        for i in 0..self.agents.len() {
            let on_chain = self.agents[i]
                .pending_cert
                .as_ref()
                .is_some_and(|c| self.rsus.cerbc().leaf_index(&Record::Certificate(c.clone())).is_some());
            if on_chain {
                let cert = self.agents[i].pending_cert.take().expect("checked");
                self.agents[i].vehicle.complete_update(cert).expect("pending key matches");
            }
        }
        self.index_mesbc();
        self.judge_due()
    }

    fn index_mesbc(&mut self) {
        let blocks = self.rsus.mesbc().blocks();
        for block in &blocks[self.mes_indexed..] {
            for r in &block.records {
                match r {
                    Record::Message(SignedMessage { message: Message::Alert(a), .. }) => {
                        self.evidence.entry(a.event_id).or_default().alerts.push(a.clone());
                    }
                    Record::Message(SignedMessage { message: Message::Disclosure(d), .. }) => {
                        self.evidence.entry(d.disputed_event_id).or_default().disclosures.push(d.clone());
                    }
                    _ => {}
                }
            }
        }
        self.mes_indexed = blocks.len();
    }

    fn judge_due(&mut self) -> Result<(), SimError> {
        let window = self.sc.block_interval_s as u64 * 1000;
        let due: Vec<u64> = self
            .evidence
            .iter()
            .filter(|(_, ev)| !ev.alerts.is_empty())
            .filter(|(id, ev)| {
                let first = ev.alerts.iter().map(|a| a.timestamp).min().expect("non-empty");
                let info = &self.events[id];
                first + window <= self.now || info.judged
            })
            .map(|(id, _)| *id)
            .collect();
        for id in due {
            let ev = self.evidence.remove(&id).expect("listed");
            if self.events[&id].judged {
                self.log.push(self.now, "lea", Event::LateEvidence { event_id: id });
                continue;
            }
            self.judge(id, ev)?;
        }
        Ok(())
    }

    fn judge(&mut self, event_id: u64, ev: Evidence) -> Result<(), SimError> {
        let info = &self.events[&event_id];
        let first = ev.alerts.iter().map(|a| a.timestamp).min().expect("due events have alerts");
        let density = self.density_at(info.position_km, first);
        let level = AlertLevel::try_from(info.level).expect("valid level");
        let verdict = if info.genuine { Verdict::Authentic } else { Verdict::Forged };
        let ctx = EventContext { level, density };
        for m in &ev.alerts {
            self.consumed.push(self.find_record(&m.sender_pu, m.timestamp));
        }
        for d in &ev.disclosures {
            self.consumed.push(self.find_record(&d.discloser_pu, d.timestamp));
        }
        let judgment = self.lea.judge(&ev.alerts, &ev.disclosures, &ctx, verdict, &self.sc.params(), self.now)?;
        self.events.get_mut(&event_id).expect("known").judged = true;
        match judgment {
            Judgment::Applied(updates) => {
                self.stats.judgments += 1;
                let updates = updates.iter().map(|u| self.view(u)).collect();
                self.log.push(
                    self.now,
                    "lea",
                    Event::Judgment {
                        event_id,
                        verdict,
                        density,
                        alerts: ev.alerts.len(),
                        disclosures: ev.disclosures.len(),
                        updates,
                    },
                );
            }
            Judgment::Deferred { unknown } => {
                self.log.push(self.now, "lea", Event::JudgmentDeferred { event_id, unknown });
            }
        }
        Ok(())
    }

    /// The MesBC record carrying a message, for the evidence audit.
    fn find_record(&self, sender: &PublicKey, timestamp: u64) -> Record {
        self.rsus
            .mesbc()
            .blocks()
            .iter()
            .rev()
            .flat_map(|b| b.records.iter().rev())
            .find(|r| match r {
                Record::Message(m) => m.message.sender() == sender && m.message.timestamp() == timestamp,
                _ => false,
            })
            .cloned()
            .expect("evidence is read from MesBC")
    }

    fn view(&self, u: &ScoreUpdate) -> UpdateView {
        let vehicle = self.agents.iter().find(|a| a.keys.contains(&u.pu)).map_or_else(String::new, |a| a.name.clone());
        UpdateView { vehicle, pseudonym: u.pu, before: u.before, after: u.after, cause: u.cause }
    }

    fn finish(self) -> Result<SimOutput, SimError> {
        let mut scores = Vec::new();
        for a in &self.agents {
            let Some(first) = a.keys.first() else { continue };
            let rec = self.lea.reputation_record(first).expect("registered");
            for h in &rec.history {
                scores.push(ScorePoint {
                    time_ms: h.time,
                    vehicle: a.name.clone(),
                    pseudonym: h.pseudonym,
                    score: h.score,
                    delta: h.delta,
                    cause: h.cause.clone(),
                });
            }
        }
        let probes = self.probes();
        Ok(SimOutput {
            log: self.log,
            scores,
            probes,
            stats: self.stats,
            rsus: self.rsus,
            lea: self.lea,
            ca: self.ca,
        })
    }

    fn probes(&self) -> Vec<ProbeResult> {
        let mut out = Vec::new();
        let mut probe = |name, passed: bool, detail: String| out.push(ProbeResult { name, passed, detail });

        probe(
            "forged_credentials_rejected",
            self.impostor_accepted == 0,
            format!("{} forged-credential broadcasts accepted", self.impostor_accepted),
        );
        probe(
            "revoked_rejected_within_interval",
            self.revoked_accepted.is_empty(),
            if self.revoked_accepted.is_empty() {
                "no late acceptance of a revoked key".into()
            } else {
                self.revoked_accepted.join(", ")
            },
        );

        let scores_ok = self.lea.reputation_records().iter().flat_map(|r| &r.history).all(|h| (0.0..=100.0).contains(&h.score));
        probe("scores_in_range", scores_ok, "every recorded score in [0, 100]".into());

        let mes = self.rsus.mesbc();
        let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
        for r in mes.records() {
            *counts.entry(r.to_bytes()).or_default() += 1;
        }
        let conserved = self.accepted.len() == counts.values().sum::<usize>()
            && self.accepted.iter().all(|m| counts.get(&Record::Message(m.clone()).to_bytes()) == Some(&1));
        probe(
            "mesbc_conservation",
            conserved,
            format!("{} accepted broadcasts, {} MesBC records", self.accepted.len(), counts.values().sum::<usize>()),
        );
        let evidence_ok = self.consumed.iter().all(|r| mes.leaf_index(r).is_some());
        probe("judgments_use_mesbc_evidence", evidence_ok, format!("{} evidence records audited", self.consumed.len()));

        let traced = mes.records().all(|r| match r {
            Record::Message(m) => self.lea.lookup(m.message.sender()).is_some(),
            _ => false,
        });
        probe("traceability", traced, "every MesBC sender resolves to one identity".into());

        let linkage = self.linkage_violations();
        probe(
            "unlinkability",
            linkage.is_empty(),
            if linkage.is_empty() {
                format!(
                    "no identity or key pair of one vehicle in {} CA inputs, the ledgers or {} transmissions",
                    self.ca.transcript().len(),
                    self.observed.len()
                )
            } else {
                linkage.join("; ")
            },
        );

        let chains: [&Chain; 3] = [self.rsus.cerbc(), self.rsus.revbc(), self.rsus.mesbc()];
        let valid = chains.iter().all(|c| {
            let bytes = save_chain(c);
            c.is_valid() && load_chain(&bytes).map(|l| save_chain(&l) == bytes).unwrap_or(false)
        });
        probe("chains_valid", valid, "each chain replays from genesis and round-trips through its file".into());
        out
    }

    /// Scans the CA transcript, every ledger record and every transmission
    /// for a real identity or any two keys of one vehicle.
    fn linkage_violations(&self) -> Vec<String> {
        let mut owner: HashMap<[u8; 32], usize> = HashMap::new();
        for (i, a) in self.agents.iter().enumerate() {
            for k in &a.keys {
                owner.insert(*k.as_bytes(), i);
            }
        }
        let identities: Vec<&[u8]> = self.agents.iter().map(|a| a.vehicle.identity()).collect();
        let mut violations = Vec::new();
        let mut check = |what: String, bytes: &[u8]| {
            if let Some(id) = identities.iter().find(|id| bytes.windows(id.len()).any(|w| w == **id)) {
                violations.push(format!("{what} contains identity {}", String::from_utf8_lossy(id)));
            }
            let mut seen: BTreeMap<usize, BTreeSet<[u8; 32]>> = BTreeMap::new();
            for w in bytes.windows(32) {
                let key: [u8; 32] = w.try_into().expect("window of 32");
                if let Some(&o) = owner.get(&key) {
                    seen.entry(o).or_default().insert(key);
                }
            }
            for (o, keys) in seen {
                if keys.len() > 1 {
                    violations.push(format!("{what} links {} keys of {}", keys.len(), self.agents[o].name));
                }
            }
        };
        for (n, input) in self.ca.transcript().iter().enumerate() {
            let kind = match input {
                CaInput::Warrant(_) => "warrant",
                CaInput::Revocation(_) => "revocation order",
            };
            check(format!("CA input {n} ({kind})"), &input.to_bytes());
        }
        for c in [self.rsus.cerbc(), self.rsus.revbc(), self.rsus.mesbc()] {
            for (n, r) in c.records().enumerate() {
                check(format!("{} record {n}", c.kind().name()), &r.to_bytes());
            }
        }

        for (n, t) in self.observed.iter().enumerate() {
            match t {
                Transmission::Sealed(bytes) => check(format!("update request {n}"), bytes),
                Transmission::Broadcast { packet, message } => {
                    let mut bytes = packet.to_bytes();
                    bytes.extend_from_slice(&message.to_bytes());
                    check(format!("transmission {n}"), &bytes);
                }
            }
        }
        violations
    }
}

/// Runs a scenario to completion. Malformed scenarios fail before any
/// simulation step.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    Sim::new(scenario).run()
}
