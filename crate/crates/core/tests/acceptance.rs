//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bars_core::ledger::{load_chain, save_chain, ChainKind, DEFAULT_DIFFICULTY, DEFAULT_EXPIRY_WINDOW_MS};
use bars_core::merkleproofs::{verify_absence, verify_presence, AppendTree, LexBound, LexEntry, LexTree};
use bars_core::protocol::messages::certificate_body;
use bars_core::protocol::{
    register, revoke_key, update_certificate, verify_broadcast, AuthContext, AuthPacket, Ca,
    Certificate, IdentityProof, Lea, RevocationReason, RoadsideUnits, UpdateReason, Vehicle,
    DEFAULT_CERT_VALIDITY_MS, DEFAULT_FRESHNESS_MS,
};
use bars_core::reputation::{
    judge_event, AlertLevel, AlertMessage, BeaconMessage, DisclosureClaim, DisclosureMessage, EventContext, Judgment,
    Message, ReputationParams, Verdict,
};
use bars_core::sigcrypt::{hash, hash_parts, keygen, sign, Digest, EnvelopeKeyPair, PublicKey};
use bars_core::simkit::bench::{bench_auth, BenchConfig};
use bars_core::simkit::overhead::{auth_time_ms, calc_overhead};
use bars_core::simkit::reference::{reputation_phases, security_probes};
use bars_core::simkit::{run_scenario, Role, Scenario, SimOutput};

type Outcome = Result<String, String>;
type Check = Box<dyn FnOnce(&mut Runs) -> Outcome>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let criteria: Vec<(&str, Check)> = vec![
        ("overhead formulas", Box::new(|_| overhead_formulas())),
        ("analytic authentication time", Box::new(|_| analytic_auth_time())),
        ("logarithmic verification scaling", Box::new(|_| logarithmic_scaling())),
        ("presence proof oracle", Box::new(|_| presence_oracle())),
        ("absence proof oracle", Box::new(|_| absence_oracle())),
        ("reputation update oracle", Box::new(|_| reputation_oracle())),
        ("reputation phase shape", Box::new(reputation_shape)),
        ("credential defect matrix", Box::new(defect_matrix)),
        ("chain tamper detection", Box::new(|_| chain_tamper())),
        ("transcript unlinkability", Box::new(unlinkability)),
        ("determinism", Box::new(determinism)),
    ];

    println!("running {} acceptance criteria", criteria.len());
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| check(&mut runs)))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_text(&e))));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name:<34} {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<34} {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

/// Each bundled scenario is simulated once and shared between criteria.
#[derive(Default)]
struct Runs {
    phases: Option<SimOutput>,
    security: Option<SimOutput>,
}

impl Runs {
    fn phases(&mut self) -> &SimOutput {
        self.phases.get_or_insert_with(|| run_scenario(&reputation_phases()).expect("reference scenario runs"))
    }

    fn security(&mut self) -> &SimOutput {
        self.security.get_or_insert_with(|| run_scenario(&security_probes()).expect("security scenario runs"))
    }
}

// ---------------------------------------------------------------- overhead

fn overhead_formulas() -> Outcome {
    let start = Instant::now();
    let r = calc_overhead(1_000_000, 100_000, 100.0, 10.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let s = 100.0 + 32.0 * 1e6f64.log2() + 40.0 * 1e5f64.log2();
    let tran = 100.0 * (100.0 - 10.0) + s * 10.0;
    let blocks_per_year: u64 = 6 * 24 * 365;
    ensure(r.header_bytes_per_year == 80 * blocks_per_year && r.header_bytes_per_year == 4_204_800, || {
        format!("header storage {} bytes/year", r.header_bytes_per_year)
    })?;
    ensure((r.packet_bytes - s).abs() < 1e-9, || format!("S = {} expected {s}", r.packet_bytes))?;
    ensure((r.tran_bytes_per_s - tran).abs() < 1e-9, || format!("Tran = {} B/s expected {tran}", r.tran_bytes_per_s))?;
    ensure((0.17..=0.19).contains(&r.tran_mbit_per_s), || format!("Tran = {} Mbit/s", r.tran_mbit_per_s))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} bytes/year, S = {:.1} B, Tran = {:.4} Mbit/s ({:.4} MB/s)",
        r.header_bytes_per_year, r.packet_bytes, r.tran_mbit_per_s, r.tran_mbyte_per_s
    ))
}

fn analytic_auth_time() -> Outcome {
    let t = auth_time_ms(1_000_000, 100_000);
    let r = calc_overhead(1_000_000, 100_000, 100.0, 10.0).map_err(|e| e.to_string())?;
    ensure((t - 0.365).abs() <= 0.005, || format!("T = {t} ms"))?;
    ensure(r.auth_time_ms == t, || format!("report carries {} ms", r.auth_time_ms))?;
    Ok(format!("T = {t:.4} ms"))
}

fn logarithmic_scaling() -> Outcome {
    let cfg = BenchConfig::default();
    ensure(cfg.n_values == [1 << 10, 1 << 14, 1 << 17, 1 << 20] && cfg.revoked_frac == 0.1, || {
        format!("unexpected default sizes {:?}", cfg.n_values)
    })?;
    let start = Instant::now();
    let table = bench_auth(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let fit = table.log_fit();
    let points: Vec<String> = table.rows.iter().map(|r| format!("{:.2}us", r.verify_ms * 1e3)).collect();
    ensure(fit.r2 >= 0.9, || format!("R^2 = {:.4} over {points:?}", fit.r2))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("R^2 = {:.4}, verify times {}", fit.r2, points.join(" ")))
}

// ---------------------------------------------------------------- proofs

/// Full recompute of an append-tree root: pair adjacent nodes and promote the
/// odd one out, level by level.
fn oracle_append_root(records: &[Vec<u8>]) -> Digest {
    if records.is_empty() {
        return hash(&[]);
    }
    let mut level: Vec<Digest> = records.iter().map(|r| hash_parts(&[&[0x00], r])).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|c| if c.len() == 2 { hash_parts(&[&[0x01], c[0].as_bytes(), c[1].as_bytes()]) } else { c[0] })
            .collect();
    }
    level[0]
}

fn oracle_lex_root(entries: &[(PublicKey, u64)]) -> Digest {
    let mut sorted = entries.to_vec();
    sorted.sort();
    let mut leaves = vec![hash_parts(&[&[0x02], &0u64.to_be_bytes()])];
    leaves.extend(sorted.iter().map(|(k, t)| hash_parts(&[&[0x02], k.as_bytes(), &t.to_be_bytes()])));
    leaves.push(hash_parts(&[&[0x02], &[0xFF; 33], &0u64.to_be_bytes()]));
    let count = leaves.len() as u64;
    while leaves.len() > 1 {
        leaves = leaves
            .chunks(2)
            .map(|c| if c.len() == 2 { hash_parts(&[&[0x01], c[0].as_bytes(), c[1].as_bytes()]) } else { c[0] })
            .collect();
    }
    hash_parts(&[&[0x03], &count.to_be_bytes(), leaves[0].as_bytes()])
}

fn presence_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    let mut checks = 0usize;
    for size in 1..=64usize {
        let records: Vec<Vec<u8>> = (0..size)
            .map(|i| {
                let mut r = vec![0u8; rng.gen_range(1..80)];
                rng.fill(&mut r[..]);
                r.extend_from_slice(&(i as u32).to_be_bytes());
                r
            })
            .collect();
        let mut tree = AppendTree::new();
        for r in &records {
            tree.append(r);
        }
        let root = oracle_append_root(&records);
        ensure(tree.root() == root, || format!("size {size}: root differs from recompute"))?;
        let mut wrong_root = *root.as_bytes();
        wrong_root[0] ^= 1;
        let wrong_root = Digest::from_bytes(wrong_root);
        for (i, rec) in records.iter().enumerate() {
            let proof = tree.prove_presence(i).map_err(|e| format!("size {size} leaf {i}: {e}"))?;
            ensure(verify_presence(&root, rec, &proof), || format!("size {size}: leaf {i} rejected"))?;
            ensure(!verify_presence(&wrong_root, rec, &proof), || format!("size {size}: leaf {i} fits a wrong root"))?;
            for (j, other) in records.iter().enumerate() {
                if j != i {
                    ensure(!verify_presence(&root, other, &proof), || {
                        format!("size {size}: proof for leaf {i} accepts leaf {j}")
                    })?;
                }
            }
            checks += size;
        }
        ensure(tree.prove_presence(size).is_err(), || format!("size {size}: proof past the end"))?;
    }
    Ok(format!("trees of 1..=64 leaves agree with recompute, {checks} verifications, 0 disagreements"))
}

fn random_key(rng: &mut ChaCha8Rng) -> PublicKey {
    PublicKey::from_bytes(rng.gen())
}

fn absence_oracle() -> Outcome {
    const TREES: usize = 10;
    const TARGETS_PER_TREE: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0xAB5E);
    let mut disagreements = Vec::new();
    let mut targets = 0;
    for t in 0..TREES {
        let entries: Vec<(PublicKey, u64)> = (0..256).map(|_| (random_key(&mut rng), rng.gen_range(0..1u64 << 40))).collect();
        let tree = LexTree::from_entries(entries.iter().map(|&(key, rev_time)| LexEntry { key, rev_time }).collect())
            .map_err(|e| e.to_string())?;
        let root = tree.root();
        ensure(root == oracle_lex_root(&entries), || format!("tree {t}: root differs from recompute"))?;

        for n in 0..TARGETS_PER_TREE {
            // Mix uniform targets with ones hugging a revoked key.
            let target = if n % 4 == 0 {
                let mut b = *entries[rng.gen_range(0..entries.len())].0.as_bytes();
                b[31] ^= 1;
                PublicKey::from_bytes(b)
            } else {
                random_key(&mut rng)
            };
            if entries.iter().any(|(k, _)| *k == target) {
                continue;
            }
            targets += 1;
            let below = entries.iter().map(|(k, _)| *k).filter(|k| *k < target).max();
            let above = entries.iter().map(|(k, _)| *k).filter(|k| *k > target).min();
            let lower = below.map_or(LexBound::Min, LexBound::Key);
            let upper = above.map_or(LexBound::Max, LexBound::Key);

            let proof = match tree.prove_absence(&target) {
                Ok(p) => p,
                Err(e) => {
                    disagreements.push(format!("tree {t}: absent target refused: {e}"));
                    continue;
                }
            };
            if proof.lower.bound != lower || proof.upper.bound != upper {
                disagreements.push(format!("tree {t}: boundaries differ from linear scan"));
            }
            if !verify_absence(&root, &target, &proof) {
                disagreements.push(format!("tree {t}: valid absence proof rejected"));
            }
            // The same proof must not vouch for either revoked neighbour.
            for revoked in [below, above].into_iter().flatten() {
                if verify_absence(&root, &revoked, &proof) {
                    disagreements.push(format!("tree {t}: revoked key passed as absent"));
                }
            }
        }
        for (k, _) in entries.iter().take(32) {
            if tree.prove_absence(k).is_ok() {
                disagreements.push(format!("tree {t}: absence proof issued for a revoked key"));
            }
        }
    }
    ensure(targets >= 1000, || format!("only {targets} absent targets drawn"))?;
    ensure(disagreements.is_empty(), || format!("{} disagreements: {}", disagreements.len(), disagreements[0]))?;
    Ok(format!("{targets} absent targets over {TREES} trees of 256 keys, 0 disagreements"))
}

// ---------------------------------------------------------------- reputation

fn ranks(items: &[(PublicKey, u64)]) -> Vec<(PublicKey, u32)> {
    let mut first: BTreeMap<PublicKey, u64> = BTreeMap::new();
    for &(k, t) in items {
        let e = first.entry(k).or_insert(t);
        *e = (*e).min(t);
    }
    let mut order: Vec<(u64, PublicKey)> = first.into_iter().map(|(k, t)| (t, k)).collect();
    order.sort();
    order.into_iter().enumerate().map(|(s, (_, k))| (k, s as u32)).collect()
}

/// Direct transcription of the update rules, kept separate from the library.
fn straight_line(
    alerts: &[(PublicKey, u64)],
    disclosures: &[(PublicKey, u64)],
    level: u8,
    density: f64,
    forged: bool,
    scores: &BTreeMap<PublicKey, f64>,
) -> BTreeMap<PublicKey, f64> {
    let (alpha, beta, d_aver) = (0.05, 0.1, 20.0);
    let dr = density / d_aver;
    let l = level as f64;
    let mut x = scores.clone();
    let clamp = |v: f64| v.clamp(0.0, 100.0);
    if disclosures.is_empty() || !forged {
        for (k, s) in ranks(alerts) {
            let r = alpha * dr / ((s as f64).exp() * l);
            let v = x[&k];
            x.insert(k, clamp(v + (100.0 - v) * r));
        }
        for (k, s) in ranks(disclosures) {
            let p = -beta * dr / ((s as f64).exp() * l);
            let v = x[&k];
            x.insert(k, clamp(v + 25.0 * p));
        }
    } else {
        for (k, s) in ranks(alerts) {
            let p = -beta * dr / ((s as f64).exp() * l);
            let v = x[&k];
            x.insert(k, clamp(v * (1.0 + p)));
        }
        for (k, s) in ranks(disclosures) {
            let r = alpha * dr / ((s as f64).exp() * l);
            let v = x[&k];
            x.insert(k, clamp(v + 50.0 * r));
        }
    }
    x
}

fn apply(judgment: Judgment, scores: &BTreeMap<PublicKey, f64>) -> Result<BTreeMap<PublicKey, f64>, String> {
    let Judgment::Applied(updates) = judgment else {
        return Err("judgment deferred".into());
    };
    let mut out = scores.clone();
    for u in updates {
        out.insert(u.pu, u.after);
    }
    Ok(out)
}

fn alert(pu: PublicKey, timestamp: u64, level: AlertLevel) -> AlertMessage {
    AlertMessage { level, event_id: 7, sender_pu: pu, timestamp, payload: Vec::new() }
}

fn disclosure(pu: PublicKey, timestamp: u64) -> DisclosureMessage {
    DisclosureMessage { disputed_event_id: 7, discloser_pu: pu, timestamp, claim: DisclosureClaim::Forged }
}

fn worked_examples() -> Result<(), String> {
    let params = ReputationParams::default();
    let ctx = EventContext { level: AlertLevel::LOSS_OF_CONTROL, density: 20.0 };
    let (a, b) = (PublicKey::from_bytes([1; 32]), PublicKey::from_bytes([2; 32]));
    let lvl = AlertLevel::LOSS_OF_CONTROL;
    let run = |d: &[DisclosureMessage], verdict, scores: &BTreeMap<PublicKey, f64>| {
        judge_event(&[alert(a, 0, lvl)], d, &ctx, verdict, scores, &params)
            .map_err(|e| e.to_string())
            .and_then(|j| apply(j, scores))
    };
    let lone = BTreeMap::from([(a, 50.0)]);
    let got = run(&[], Verdict::Authentic, &lone)?[&a];
    ensure(got == 52.5, || format!("undisputed alert gives {got}, expected 52.5"))?;

    let pair = BTreeMap::from([(a, 80.0), (b, 60.0)]);
    let forged = run(&[disclosure(b, 5)], Verdict::Forged, &pair)?;
    ensure(forged[&a] == 72.0, || format!("forged sender gives {}, expected 72.0", forged[&a]))?;
    ensure(forged[&b] == 62.5, || format!("true discloser gives {}, expected 62.5", forged[&b]))?;
    let upheld = run(&[disclosure(b, 5)], Verdict::Authentic, &pair)?;
    ensure(upheld[&b] == 57.5, || format!("false discloser gives {}, expected 57.5", upheld[&b]))
}

fn reputation_oracle() -> Outcome {
    worked_examples()?;
    let params = ReputationParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA160);
    let mut worst = 0.0f64;
    const CASES: usize = 1000;
    for case in 0..CASES {
        let level_n: u8 = rng.gen_range(1..=3);
        let level = AlertLevel::try_from(level_n).expect("1..=3");
        let density = rng.gen_range(0.5..80.0);
        let ctx = EventContext { level, density };
        let forged = rng.gen_bool(0.5);
        let verdict = if forged { Verdict::Forged } else { Verdict::Authentic };

        let people: Vec<PublicKey> = (0..rng.gen_range(1..=8)).map(|_| random_key(&mut rng)).collect();
        let split = rng.gen_range(1..=people.len());
        let mut alerts = Vec::new();
        let mut discl = Vec::new();
        for &k in &people[..split] {
            for _ in 0..rng.gen_range(1..=2) {
                alerts.push((k, rng.gen_range(0..20u64)));
            }
        }
        for &k in &people[split..] {
            discl.push((k, rng.gen_range(0..40u64)));
        }
        let scores: BTreeMap<PublicKey, f64> = people
            .iter()
            .map(|&k| (k, if rng.gen_bool(0.1) { [0.0, 100.0][rng.gen_range(0..2)] } else { rng.gen_range(0.0..=100.0) }))
            .collect();

        let alert_msgs: Vec<AlertMessage> = alerts.iter().map(|&(k, t)| alert(k, t, level)).collect();
        let discl_msgs: Vec<DisclosureMessage> = discl.iter().map(|&(k, t)| disclosure(k, t)).collect();
        let got = judge_event(&alert_msgs, &discl_msgs, &ctx, verdict, &scores, &params)
            .map_err(|e| format!("case {case}: {e}"))
            .and_then(|j| apply(j, &scores))?;
        let want = straight_line(&alerts, &discl, level_n, density, forged, &scores);
        for k in &people {
            let (g, w) = (got[k], want[k]);
            let rel = if w == 0.0 { g.abs() } else { ((g - w) / w).abs() };
            worst = worst.max(rel);
            ensure(rel <= 1e-12, || format!("case {case}: {g} vs {w} (relative error {rel:e})"))?;
        }
    }
    Ok(format!("worked examples exact; {CASES} random cases, worst relative error {worst:e}"))
}

fn phase_window(sc: &Scenario, vehicle: &str, role: Role) -> Option<(f64, f64)> {
    let v = sc.vehicles.iter().find(|v| v.name == vehicle)?;
    let phases: Vec<_> = v.phases.iter().filter(|p| p.role == role).collect();
    Some((phases.first()?.from_hour, phases.last()?.to_hour))
}

fn reputation_shape(runs: &mut Runs) -> Outcome {
    let sc = reputation_phases();
    let honest = sc.vehicles.iter().find(|v| v.phases.iter().all(|p| p.role == Role::Honest) && !v.phases.is_empty());
    let silent = sc.vehicles.iter().find(|v| v.phases.iter().all(|p| p.role == Role::NonParticipant));
    let mis = sc.vehicles.iter().find(|v| v.phases.iter().any(|p| p.role == Role::Forger));
    let (Some(honest), Some(silent), Some(mis)) = (honest, silent, mis) else {
        return Err("reference scenario lacks an honest, a misbehaving or a non-participating vehicle".into());
    };
    let forge = phase_window(&sc, &mis.name, Role::Forger).ok_or("no forgery phase")?;
    let slander = phase_window(&sc, &mis.name, Role::Slanderer).ok_or("no slander phase")?;

    let out = runs.phases();
    let hour = |p: &&bars_core::simkit::ScorePoint| p.time_ms as f64 / 3_600_000.0;

    let a = out.series(&honest.name);
    ensure(a.windows(2).all(|w| w[1].score >= w[0].score), || format!("(a) {} loses score", honest.name))?;
    let a_end = a.last().map_or(50.0, |p| p.score);
    ensure(a_end > 50.0, || format!("(a) {} ends at {a_end}", honest.name))?;

    let b = out.series(&mis.name);
    let strict_drop = |(from, to): (f64, f64)| {
        let mut prev = b.iter().rfind(|p| hour(p) < from).map_or(50.0, |p| p.score);
        b.iter().filter(|p| hour(p) >= from && hour(p) < to).any(|p| {
            let drop = p.score < prev;
            prev = p.score;
            drop
        })
    };
    ensure(strict_drop(forge), || format!("(b) no drop for {} in {forge:?} h", mis.name))?;
    ensure(strict_drop(slander), || format!("(b) no drop for {} in {slander:?} h", mis.name))?;

    let c = out.series(&silent.name);
    ensure(!c.is_empty() && c.iter().all(|p| p.score == c[0].score), || format!("(c) {} score moves", silent.name))?;

    let b_low = b.iter().map(|p| p.score).fold(f64::INFINITY, f64::min);
    ensure(out.scores.iter().all(|p| (0.0..=100.0).contains(&p.score)), || "(d) score outside [0, 100]".into())?;
    Ok(format!(
        "{}: 50 -> {a_end:.2} non-decreasing; {}: drops while forging and slandering (low {b_low:.2}); {}: constant; {} points in range",
        honest.name,
        mis.name,
        silent.name,
        out.scores.len()
    ))
}

// ---------------------------------------------------------------- security

const FORGED: u8 = 1;
const UNISSUED: u8 = 2;
const REVOKED: u8 = 4;
const EXPIRED: u8 = 8;

fn self_made_certificate(pu: PublicKey, expiry: u64) -> Certificate {
    let fake_ca = keygen([0xF0; 32]);
    let fake_lea = keygen([0xF1; 32]);
    let body = certificate_body(&pu, 100.0, expiry);
    Certificate {
        pu_ca: fake_ca.public,
        sig_ca: sign(&fake_ca.private, &body),
        pu_lea: fake_lea.public,
        sig_lea: sign(&fake_lea.private, &body),
        pu_vehicle: pu,
        reputation: 100.0,
        expiry,
    }
}

fn authorities() -> (Lea, Ca, RoadsideUnits) {
    let lea = Lea::new(keygen([0x1E; 32]), EnvelopeKeyPair::from_seed([0x1F; 32]));
    let ca = Ca::new(keygen([0xCA; 32]), lea.public());
    let rsus = RoadsideUnits::new(ca.anchors(), DEFAULT_DIFFICULTY, DEFAULT_EXPIRY_WINDOW_MS, 5);
    (lea, ca, rsus)
}

/// All sixteen combinations of {forged, unissued, revoked, expired}, one
/// vehicle each, checked by full broadcast verification. Only the clean
/// vehicle may be accepted.
fn defect_matrix(runs: &mut Runs) -> Outcome {
    let (mut lea, mut ca, mut rsus) = authorities();
    let mut vehicles = Vec::new();
    let mut presented = Vec::new();
    let mut forged_submitted = 0;
    for mask in 0u8..16 {
        lea.cert_validity_ms = if mask & EXPIRED != 0 { 1_000 } else { DEFAULT_CERT_VALIDITY_MS };
        let mut v = Vehicle::new([0x40 + mask; 32], vec![b'V', mask]);
        let proof = IdentityProof { material: v.identity().to_vec(), valid: true };
        let genuine = register(&mut lea, &mut ca, &proof, v.public(), 0).map_err(|e| e.to_string())?;
        v.install_certificate(genuine.clone()).map_err(|e| e.to_string())?;
        let cert = if mask & FORGED != 0 { self_made_certificate(v.public(), genuine.expiry) } else { genuine };
        if mask & UNISSUED == 0 {
            rsus.submit_certificate(cert.clone());
            forged_submitted += usize::from(mask & FORGED != 0);
        }
        presented.push(cert);
        vehicles.push(v);
    }
    let seal = rsus.seal(600).map_err(|e| e.to_string())?;
    ensure(seal.cerbc.accepted == 4 && seal.cerbc.rejected.len() == forged_submitted, || {
        format!("CerBC took {} certificates and refused {}", seal.cerbc.accepted, seal.cerbc.rejected.len())
    })?;

    let borrowed = vehicles[0].packet(rsus.cerbc(), rsus.revbc()).map_err(|e| e.to_string())?.presence;
    let build = |rsus: &RoadsideUnits, mask: u8| -> Result<AuthPacket, String> {
        let i = mask as usize;
        if mask & (FORGED | UNISSUED) == 0 {
            return vehicles[i].packet(rsus.cerbc(), rsus.revbc()).map_err(|e| e.to_string());
        }
        // Nothing on CerBC proves this certificate; borrow a valid path.
        Ok(AuthPacket {
            certificate: presented[i].clone(),
            cerbc_height: rsus.cerbc().height() as u32,
            presence: borrowed.clone(),
            revbc_height: rsus.revbc().height() as u32,
            absence: rsus.revbc().lex_tree().expect("revbc").prove_absence(&presented[i].pu_vehicle).map_err(|e| e.to_string())?,
        })
    };
    // Revoked vehicles present the packet they held before revocation.
    let early: Vec<AuthPacket> = (0..16u8).map(|m| build(&rsus, m)).collect::<Result<_, _>>()?;
    for mask in (0u8..16).filter(|m| m & REVOKED != 0) {
        let rev = revoke_key(&mut lea, &mut ca, vehicles[mask as usize].public(), 700_000, RevocationReason::Compromised)
            .map_err(|e| e.to_string())?;
        rsus.submit_revocation(rev);
    }
    let seal = rsus.seal(1200).map_err(|e| e.to_string())?;
    ensure(seal.revbc.accepted == 8, || format!("RevBC took {} revocations", seal.revbc.accepted))?;

    let now = 1_300_000;
    let mut accepted = Vec::new();
    for mask in 0u8..16 {
        let packet = if mask & REVOKED != 0 { early[mask as usize].clone() } else { build(&rsus, mask)? };
        let v = &vehicles[mask as usize];
        let msg = v.sign(Message::Beacon(BeaconMessage { sender_pu: v.public(), status: vec![0; 100], timestamp: now }));
        let ok = AuthContext::for_packet(&packet, rsus.cerbc(), rsus.revbc(), now)
            .is_some_and(|ctx| verify_broadcast(&msg, &packet, &ctx, DEFAULT_FRESHNESS_MS).is_ok());
        ensure(ok == (mask == 0), || format!("mask {mask:04b}: accepted = {ok}"))?;
        if ok {
            accepted.push(mask);
        }
    }

    let mut probes = Vec::new();
    runs.phases();
    runs.security();
    for (name, out) in [("reputation-phases", runs.phases.as_ref()), ("security-probes", runs.security.as_ref())] {
        let out = out.expect("simulated above");
        for p in out.probes.iter().filter(|p| p.name.starts_with("forged") || p.name.starts_with("revoked")) {
            ensure(p.passed, || format!("{name} run: {}: {}", p.name, p.detail))?;
            probes.push(format!("{name}/{}", p.name));
        }
    }
    ensure(probes.len() == 4, || format!("expected four run probes, found {probes:?}"))?;
    Ok(format!(
        "16 defect combinations, only the clean one accepted; {forged_submitted} forged certificates refused by CerBC; run probes pass: {}",
        probes.join(", ")
    ))
}

/// Small chains of every kind, touching each record type.
fn small_chains() -> Result<Vec<(ChainKind, Vec<u8>)>, String> {
    let (mut lea, mut ca, mut rsus) = authorities();
    let mut v = Vehicle::new([0x21; 32], b"VIN-021".to_vec());
    let proof = IdentityProof { material: v.identity().to_vec(), valid: true };
    let cert = register(&mut lea, &mut ca, &proof, v.public(), 0).map_err(|e| e.to_string())?;
    v.install_certificate(cert.clone()).map_err(|e| e.to_string())?;
    rsus.submit_certificate(cert);
    rsus.seal(600).map_err(|e| e.to_string())?;

    let sealed = v.request_update(&lea.envelope_key(), UpdateReason::Privacy, 700_000);
    let (cert, rev) = update_certificate(&mut lea, &mut ca, &sealed, 700_000).map_err(|e| e.to_string())?;
    v.complete_update(cert.clone()).map_err(|e| e.to_string())?;
    rsus.submit_certificate(cert);
    rsus.submit_revocation(rev);
    let msg = v.sign(Message::Beacon(BeaconMessage { sender_pu: v.public(), status: vec![3; 100], timestamp: 800_000 }));
    rsus.submit_message(msg);
    rsus.seal(1200).map_err(|e| e.to_string())?;
    Ok([ChainKind::CerBc, ChainKind::RevBc, ChainKind::MesBc].into_iter().map(|k| (k, save_chain(rsus.chain(k)))).collect())
}

fn chain_tamper() -> Outcome {
    let mut summary = Vec::new();
    let mut survivors = Vec::new();
    let mut total = 0usize;
    for (kind, bytes) in small_chains()? {
        load_chain(&bytes).map_err(|e| format!("{} fails to load untouched: {e}", kind.name()))?;
        for pos in 0..bytes.len() {
            for value in 0..=255u8 {
                if value == bytes[pos] {
                    continue;
                }
                let mut m = bytes.clone();
                m[pos] = value;
                total += 1;
                if load_chain(&m).is_ok() {
                    survivors.push(format!("{} byte {pos} = {value:#04x}", kind.name()));
                }
            }
        }
        summary.push(format!("{} {} B", kind.name(), bytes.len()));
    }
    ensure(survivors.is_empty(), || format!("{} of {total} mutations load: {}", survivors.len(), survivors[0]))?;
    Ok(format!("all {total} single-byte mutations rejected ({})", summary.join(", ")))
}

fn unlinkability(runs: &mut Runs) -> Outcome {
    let mut notes = Vec::new();
    runs.phases();
    runs.security();
    for (name, out) in [("reputation-phases", runs.phases.as_ref()), ("security-probes", runs.security.as_ref())] {
        let out = out.expect("simulated above");
        let p = out.probes.iter().find(|p| p.name == "unlinkability").ok_or("run has no unlinkability probe")?;
        ensure(p.passed, || format!("{name}: {}", p.detail))?;
        ensure(out.stats.key_updates > 0, || format!("{name}: no key updates to link"))?;
        notes.push(format!("{name}: {} key updates, {}", out.stats.key_updates, p.detail));
    }
    Ok(notes.join("; "))
}

fn determinism(runs: &mut Runs) -> Outcome {
    let mut checked = Vec::new();
    let base = [reputation_phases(), security_probes()];
    let reseeded: Vec<Scenario> = base.iter().map(|s| Scenario { seed: s.seed ^ 0x5EED, ..s.clone() }).collect();
    for (k, sc) in base.iter().chain(reseeded.iter()).enumerate() {
        let fresh;
        let first = match k {
            0 => runs.phases(),
            1 => runs.security(),
            _ => {
                fresh = run_scenario(sc).map_err(|e| e.to_string())?;
                &fresh
            }
        };
        let second = run_scenario(sc).map_err(|e| e.to_string())?;
        ensure(first.log.to_jsonl() == second.log.to_jsonl(), || format!("{} seed {}: event logs differ", sc.name, sc.seed))?;
        for ((name, a), (_, b)) in first.chain_files().iter().zip(second.chain_files().iter()) {
            ensure(a == b, || format!("{} seed {}: {name} differs", sc.name, sc.seed))?;
        }
        checked.push(format!("{}@{}", sc.name, sc.seed));
    }
    Ok(format!("event logs and chain files byte-identical across reruns of {}", checked.join(", ")))
}
