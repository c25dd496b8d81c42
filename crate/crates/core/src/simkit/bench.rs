//! Authentication cost against tree size.
//!
//! CerBC is populated with `n` leaves of which `trials` are real
//! CA/LEA-signed certificates at scattered positions; the rest are filler
//! digests, which hash exactly like certificate leaves. RevBC holds
//! `m = n * revoked_frac` random keys. Each trial builds a fresh packet and
//! times its verification. Timed rounds are interleaved across sizes so
//! clock-frequency drift does not land on one size only.

use std::hint::black_box;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::overhead::auth_time_ms;
use crate::merkleproofs::{verify_absence, verify_presence, AppendTree, LexEntry, LexTree};
use crate::protocol::messages::certificate_body;
use crate::protocol::{authenticate, AuthContext, AuthPacket, Certificate};
use crate::sigcrypt::{hash, keygen, sign, PublicKey};

/// Largest CerBC size accepted; about 2 GiB of tree state.
pub const MAX_BENCH_N: u64 = 1 << 25;
/// Minimum number of measured trials per size.
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("n = {n} exceeds the benchmark memory limit of {limit} certificates")]
    TooLarge { n: u64, limit: u64 },
    #[error("revoked fraction must be in (0, 1), got {0}")]
    Fraction(f64),
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    Trials(usize),
    #[error("need at least one n value, each at least 2")]
    Sizes,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchConfig {
    pub n_values: Vec<u64>,
    pub revoked_frac: f64,
    pub trials: usize,
    /// Timed passes over all trials; the fastest pass is reported.
    pub rounds: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_values: vec![1 << 10, 1 << 14, 1 << 17, 1 << 20], revoked_frac: 0.1, trials: 200, rounds: 25, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: u64,
    pub m: u64,
    pub presence_steps: f64,
    pub absence_steps: f64,
    pub packet_bytes: f64,
    /// Mean presence + absence verification time.
    pub verify_ms: f64,
    /// Mean full `authenticate` time, signatures included.
    pub auth_ms: f64,
    pub predicted_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchTable {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

pub const BENCH_CSV_HEADER: [&str; 8] =
    ["n", "m", "presence_steps", "absence_steps", "packet_bytes", "verify_ms", "auth_ms", "predicted_ms"];

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BENCH_CSV_HEADER).expect("in-memory csv");
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.m.to_string(),
                format!("{:.3}", r.presence_steps),
                format!("{:.3}", r.absence_steps),
                format!("{:.1}", r.packet_bytes),
                format!("{:.6}", r.verify_ms),
                format!("{:.6}", r.auth_ms),
                format!("{:.6}", r.predicted_ms),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// Least-squares fit of verify time against `log2 n + log2 m`.
    pub fn log_fit(&self) -> Fit {
        let pts: Vec<(f64, f64)> =
            self.rows.iter().map(|r| ((r.n as f64).log2() + (r.m as f64).log2(), r.verify_ms)).collect();
        linear_fit(&pts)
    }
}

pub fn linear_fit(pts: &[(f64, f64)]) -> Fit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Fit { intercept, slope, r2 }
}

fn validate(cfg: &BenchConfig) -> Result<(), BenchError> {
    if !(cfg.revoked_frac > 0.0 && cfg.revoked_frac < 1.0) {
        return Err(BenchError::Fraction(cfg.revoked_frac));
    }
    if cfg.trials < MIN_TRIALS {
        return Err(BenchError::Trials(cfg.trials));
    }
    if cfg.n_values.is_empty() || cfg.n_values.iter().any(|&n| n < 2) {
        return Err(BenchError::Sizes);
    }
    if let Some(&n) = cfg.n_values.iter().find(|&&n| n > MAX_BENCH_N) {
        return Err(BenchError::TooLarge { n, limit: MAX_BENCH_N });
    }
    Ok(())
}

fn random_key(rng: &mut ChaCha8Rng) -> PublicKey {
    PublicKey::from_bytes(rng.gen())
}

/// Trees and packets for one CerBC size.
struct Fixture {
    n: u64,
    m: u64,
    packets: Vec<AuthPacket>,
    leaves: Vec<Vec<u8>>,
    ctx: AuthContext,
}

fn prepare(n: u64, cfg: &BenchConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n.rotate_left(17));
    let m = ((n as f64 * cfg.revoked_frac).round() as u64).max(1);
    let ca = keygen(rng.gen());
    let lea = keygen(rng.gen());
    let expiry = u64::MAX / 2;

    let k = cfg.trials.min(n as usize);
    let mut slots = sample(&mut rng, n as usize, k).into_vec();
    slots.sort_unstable();
    let certs: Vec<Certificate> = slots
        .iter()
        .map(|_| {
            let pu = keygen(rng.gen()).public;
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
        })
        .collect();

    let mut next = 0;
    let tree: AppendTree = (0..n as usize)
        .map(|i| {
            if next < slots.len() && slots[next] == i {
                next += 1;
                AppendTree::leaf_digest(&certs[next - 1].to_bytes())
            } else {
                hash(&(i as u64).to_be_bytes())
            }
        })
        .collect();
    let revoked: Vec<LexEntry> = (0..m).map(|t| LexEntry { key: random_key(&mut rng), rev_time: t }).collect();
    let lex = LexTree::from_entries(revoked).expect("random keys do not collide");

    let packets: Vec<AuthPacket> = (0..cfg.trials)
        .map(|t| {
            let c = t % k;
            AuthPacket {
                certificate: certs[c].clone(),
                cerbc_height: 1,
                presence: tree.prove_presence(slots[c]).expect("slot in range"),
                revbc_height: 1,
                absence: lex.prove_absence(&certs[c].pu_vehicle).expect("fresh key is absent"),
            }
        })
        .collect();
    let leaves: Vec<Vec<u8>> = packets.iter().map(|p| p.certificate.to_bytes()).collect();
    let ctx = AuthContext { cerbc_root: tree.root(), revbc_root: lex.root(), now: 0 };

    Fixture { n, m, packets, leaves, ctx }
}

impl Fixture {
    /// One timed pass; mean milliseconds for proof checks and for full
    /// authentication.
    fn time_round(&self) -> (f64, f64) {
        let count = self.packets.len() as f64;
        let start = Instant::now();
        for (p, leaf) in self.packets.iter().zip(&self.leaves) {
            let ok = verify_presence(&self.ctx.cerbc_root, black_box(leaf), black_box(&p.presence))
                && verify_absence(&self.ctx.revbc_root, &p.certificate.pu_vehicle, black_box(&p.absence));
            assert!(ok, "benchmark packet failed verification");
        }
        let verify = start.elapsed().as_secs_f64() * 1e3 / count;

        let start = Instant::now();
        for p in &self.packets {
            assert!(authenticate(black_box(p), &self.ctx).is_ok());
        }
        (verify, start.elapsed().as_secs_f64() * 1e3 / count)
    }

    fn row(&self, verify_ms: f64, auth_ms: f64) -> BenchRow {
        let count = self.packets.len() as f64;
        let mean = |f: &dyn Fn(&AuthPacket) -> usize| self.packets.iter().map(|p| f(p) as f64).sum::<f64>() / count;
        BenchRow {
            n: self.n,
            m: self.m,
            presence_steps: mean(&|p| p.presence.len()),
            absence_steps: mean(&|p| p.absence.lower_path.len() + p.absence.upper_path.len()),
            packet_bytes: mean(&|p| p.encoded_len()),
            verify_ms,
            auth_ms,
            predicted_ms: auth_time_ms(self.n, self.m),
        }
    }
}

/// Measures one CerBC size on its own.
pub fn bench_one(n: u64, cfg: &BenchConfig) -> BenchRow {
    let f = prepare(n, cfg);
    let (mut verify, mut auth) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..cfg.rounds.max(1) {
        let (v, a) = f.time_round();
        verify = verify.min(v);
        auth = auth.min(a);
    }
    f.row(verify, auth)
}

pub fn bench_auth(cfg: &BenchConfig) -> Result<BenchTable, BenchError> {
    validate(cfg)?;
    let fixtures: Vec<Fixture> = cfg.n_values.iter().map(|&n| prepare(n, cfg)).collect();
    let mut best = vec![(f64::INFINITY, f64::INFINITY); fixtures.len()];
    for _ in 0..cfg.rounds.max(1) {
        for (f, b) in fixtures.iter().zip(best.iter_mut()) {
            let (v, a) = f.time_round();
            *b = (b.0.min(v), b.1.min(a));
        }
    }
    let rows = fixtures.iter().zip(best).map(|(f, (v, a))| f.row(v, a)).collect();
    Ok(BenchTable { config: cfg.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let base = BenchConfig { n_values: vec![1024], ..Default::default() };
        assert!(bench_auth(&BenchConfig { revoked_frac: 0.0, ..base.clone() }).is_err());
        assert!(bench_auth(&BenchConfig { revoked_frac: 1.0, ..base.clone() }).is_err());
        assert_eq!(bench_auth(&BenchConfig { trials: 10, ..base.clone() }), Err(BenchError::Trials(10)));
        let huge = BenchConfig { n_values: vec![1 << 30], ..base };
        let err = bench_auth(&huge).unwrap_err();
        assert!(err.to_string().contains(&MAX_BENCH_N.to_string()));
    }

    #[test]
    fn doubling_n_adds_one_presence_step() {
        let cfg = BenchConfig { n_values: vec![1 << 8, 1 << 9], rounds: 1, ..Default::default() };
        let t = bench_auth(&cfg).unwrap();
        assert_eq!(t.rows[0].presence_steps, 8.0);
        assert_eq!(t.rows[1].presence_steps, 9.0);
        assert!(t.to_csv().starts_with("n,m,"));
    }

    #[test]
    fn fit_recovers_a_line() {
        let f = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }
}
