use std::collections::{BTreeSet, HashSet};

use crate::ledger::{quorum_accept, Chain, ChainConfig, ChainKind, LedgerError, Record, RecordError, TrustAnchors};
use crate::merkleproofs::AppendTree;

use super::messages::{Certificate, RevocationMessage, SignedMessage};

/// Outcome of one sealing round on one chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct ChainSeal {
    pub accepted: usize,
    pub rejected: Vec<RecordError>,
    /// False when the RSU quorum refused the block.
    pub committed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct SealReport {
    pub timestamp: u32,
    pub cerbc: ChainSeal,
    pub revbc: ChainSeal,
    pub mesbc: ChainSeal,
}

/// The RSU network, modelled as one quorum gate over the three chains. Each
/// block interval the pending records are validated, mined into one block
/// per chain and appended once a majority of RSUs accepts.
#[derive(Clone, Debug)]
pub struct RoadsideUnits {
    cerbc: Chain,
    revbc: Chain,
    mesbc: Chain,
    pending_certs: Vec<Record>,
    pending_revs: Vec<Record>,
    pending_msgs: Vec<Record>,
    rsu_count: usize,
    compromised: BTreeSet<usize>,
}

impl RoadsideUnits {
    pub fn new(anchors: TrustAnchors, difficulty: u32, expiry_window_ms: u64, rsu_count: usize) -> Self {
        let chain = |kind| {
            let mut cfg = ChainConfig::new(kind, anchors);
            cfg.difficulty = difficulty;
            cfg.expiry_window_ms = expiry_window_ms;
            Chain::new(cfg)
        };
        Self {
            cerbc: chain(ChainKind::CerBc),
            revbc: chain(ChainKind::RevBc),
            mesbc: chain(ChainKind::MesBc),
            pending_certs: Vec::new(),
            pending_revs: Vec::new(),
            pending_msgs: Vec::new(),
            rsu_count: rsu_count.max(1),
            compromised: BTreeSet::new(),
        }
    }

    pub fn cerbc(&self) -> &Chain {
        &self.cerbc
    }

    pub fn revbc(&self) -> &Chain {
        &self.revbc
    }

    pub fn mesbc(&self) -> &Chain {
        &self.mesbc
    }

    pub fn chain(&self, kind: ChainKind) -> &Chain {
        match kind {
            ChainKind::CerBc => &self.cerbc,
            ChainKind::RevBc => &self.revbc,
            ChainKind::MesBc => &self.mesbc,
        }
    }

    /// Marks an RSU as voting against every block.
    pub fn compromise(&mut self, rsu: usize) {
        if rsu < self.rsu_count {
            self.compromised.insert(rsu);
        }
    }

    pub fn submit_certificate(&mut self, cert: Certificate) {
        self.pending_certs.push(Record::Certificate(cert));
    }

    pub fn submit_revocation(&mut self, rev: RevocationMessage) {
        self.pending_revs.push(Record::Revocation(rev));
    }

    pub fn submit_message(&mut self, msg: SignedMessage) {
        self.pending_msgs.push(Record::Message(msg));
    }

    pub fn pending(&self) -> usize {
        self.pending_certs.len() + self.pending_revs.len() + self.pending_msgs.len()
    }

    fn votes(&self) -> Vec<bool> {
        (0..self.rsu_count).map(|i| !self.compromised.contains(&i)).collect()
    }

    fn filter(chain: &Chain, pending: Vec<Record>) -> (Vec<Record>, Vec<RecordError>) {
        let mut keep = Vec::new();
        let mut rejected = Vec::new();
        let mut seen = HashSet::new();
        for r in pending {
            if let Err(e) = chain.check_record(&r) {
                rejected.push(e);
                continue;
            }
            let fresh = match &r {
                Record::Revocation(rev) => {
                    !chain.lex_tree().is_some_and(|t| t.contains(&rev.pu_rev)) && seen.insert(*rev.pu_rev.as_bytes())
                }
                other => {
                    chain.leaf_index(other).is_none()
                        && seen.insert(*AppendTree::leaf_digest(&other.leaf_bytes()).as_bytes())
                }
            };
            if fresh {
                keep.push(r);
            } else {
                rejected.push(RecordError::Duplicate);
            }
        }
        (keep, rejected)
    }

    fn seal_one(&mut self, kind: ChainKind, timestamp: u32) -> Result<ChainSeal, LedgerError> {
        let pending = std::mem::take(match kind {
            ChainKind::CerBc => &mut self.pending_certs,
            ChainKind::RevBc => &mut self.pending_revs,
            ChainKind::MesBc => &mut self.pending_msgs,
        });
        let votes = self.votes();
        let chain = match kind {
            ChainKind::CerBc => &mut self.cerbc,
            ChainKind::RevBc => &mut self.revbc,
            ChainKind::MesBc => &mut self.mesbc,
        };
        let (records, rejected) = Self::filter(chain, pending);
        let accepted = records.len();
        let block = chain.mine_block(records, timestamp)?;
        let committed = quorum_accept(&votes)?;
        if committed {
            chain.append_block(block)?;
        }
        Ok(ChainSeal { accepted: if committed { accepted } else { 0 }, rejected, committed })
    }

    /// Closes the current block interval on all three chains.
    pub fn seal(&mut self, timestamp: u32) -> Result<SealReport, LedgerError> {
        Ok(SealReport {
            timestamp,
            cerbc: self.seal_one(ChainKind::CerBc, timestamp)?,
            revbc: self.seal_one(ChainKind::RevBc, timestamp)?,
            mesbc: self.seal_one(ChainKind::MesBc, timestamp)?,
        })
    }
}
