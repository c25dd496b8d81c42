//! The three chains: CerBC (issued certificates), RevBC (revoked keys) and
//! MesBC (broadcast messages).
//!
//! Every block header commits the chain's cumulative state root after the
//! block is applied: the append-tree root for CerBC and MesBC, the lex-tree
//! root for RevBC. A verifier holding any committed root can check proofs
//! against it without the block bodies.

mod persist;

pub use persist::{dump_chain, load_chain, save_chain, FILE_MAGIC};

use std::collections::HashMap;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::merkleproofs::{AppendTree, LexEntry, LexTree, MerkleError};
use crate::protocol::messages::{Certificate, RevocationMessage, SignedMessage};
use crate::sigcrypt::{hash, Digest, PublicKey};

pub const HEADER_LEN: usize = 80;
pub const HEADER_VERSION: u16 = 1;
pub const DEFAULT_DIFFICULTY: u32 = 8;
/// Ten minutes, in seconds.
pub const DEFAULT_BLOCK_INTERVAL_S: u32 = 600;
/// Thirty days, in milliseconds.
pub const DEFAULT_EXPIRY_WINDOW_MS: u64 = 30 * 24 * 3600 * 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    CerBc,
    RevBc,
    MesBc,
}

impl ChainKind {
    pub fn id(self) -> u16 {
        match self {
            ChainKind::CerBc => 1,
            ChainKind::RevBc => 2,
            ChainKind::MesBc => 3,
        }
    }

    pub fn from_id(id: u16) -> Option<Self> {
        match id {
            1 => Some(ChainKind::CerBc),
            2 => Some(ChainKind::RevBc),
            3 => Some(ChainKind::MesBc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChainKind::CerBc => "cerbc",
            ChainKind::RevBc => "revbc",
            ChainKind::MesBc => "mesbc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct BlockHeader {
    pub prev_hash: Digest,
    pub payload_root: Digest,
    /// Seconds.
    pub timestamp: u32,
    pub nonce: u32,
    pub version: u16,
    pub chain_id: u16,
    pub difficulty: u32,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..32].copy_from_slice(self.prev_hash.as_bytes());
        out[32..64].copy_from_slice(self.payload_root.as_bytes());
        out[64..68].copy_from_slice(&self.timestamp.to_be_bytes());
        out[68..72].copy_from_slice(&self.nonce.to_be_bytes());
        out[72..74].copy_from_slice(&self.version.to_be_bytes());
        out[74..76].copy_from_slice(&self.chain_id.to_be_bytes());
        out[76..80].copy_from_slice(&self.difficulty.to_be_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Self {
        let u32_at = |i: usize| u32::from_be_bytes(b[i..i + 4].try_into().unwrap());
        let u16_at = |i: usize| u16::from_be_bytes(b[i..i + 2].try_into().unwrap());
        Self {
            prev_hash: Digest::from_slice(&b[0..32]).unwrap(),
            payload_root: Digest::from_slice(&b[32..64]).unwrap(),
            timestamp: u32_at(64),
            nonce: u32_at(68),
            version: u16_at(72),
            chain_id: u16_at(74),
            difficulty: u32_at(76),
        }
    }

    pub fn hash(&self) -> Digest {
        hash(&self.to_bytes())
    }

    pub fn meets_difficulty(&self) -> bool {
        leading_zero_bits(&self.hash()) >= self.difficulty
    }
}

pub fn leading_zero_bits(d: &Digest) -> u32 {
    let mut n = 0;
    for b in d.as_bytes() {
        if *b == 0 {
            n += 8;
        } else {
            return n + b.leading_zeros();
        }
    }
    n
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Certificate(Certificate),
    Revocation(RevocationMessage),
    Message(SignedMessage),
}

impl Record {
    pub fn encode(&self, w: &mut Writer) {
        match self {
            Record::Certificate(c) => {
                w.u8(1);
                c.encode(w);
            }
            Record::Revocation(r) => {
                w.u8(2);
                r.encode(w);
            }
            Record::Message(m) => {
                w.u8(3);
                m.encode(w);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let rec = match r.u8()? {
            1 => Record::Certificate(Certificate::decode(&mut r)?),
            2 => Record::Revocation(RevocationMessage::decode(&mut r)?),
            3 => Record::Message(SignedMessage::decode(&mut r)?),
            _ => return Err(r.invalid("record type")),
        };
        r.finish()?;
        Ok(rec)
    }

    /// Leaf bytes for append-tree chains. For certificates this is the
    /// serialized certificate itself, so presence proofs are over it.
    pub fn leaf_bytes(&self) -> Vec<u8> {
        match self {
            Record::Certificate(c) => c.to_bytes(),
            other => other.to_bytes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Block {
    pub header: BlockHeader,
    pub records: Vec<Record>,
}

/// Public keys every RSU trusts as the issuing authorities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrustAnchors {
    pub ca: PublicKey,
    pub lea: PublicKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChainConfig {
    pub kind: ChainKind,
    pub anchors: TrustAnchors,
    pub difficulty: u32,
    /// How long a revoked key stays in RevBC.
    pub expiry_window_ms: u64,
}

impl ChainConfig {
    pub fn new(kind: ChainKind, anchors: TrustAnchors) -> Self {
        Self { kind, anchors, difficulty: DEFAULT_DIFFICULTY, expiry_window_ms: DEFAULT_EXPIRY_WINDOW_MS }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordError {
    #[error("record type does not belong on {0:?}")]
    WrongChain(ChainKind),
    #[error("issuer keys are not the trusted CA/LEA")]
    UntrustedIssuer,
    #[error("signature check failed")]
    BadSignature,
    #[error("record already on chain")]
    Duplicate,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("record {index} rejected: {reason}")]
    InvalidRecord { index: usize, reason: RecordError },
    #[error("block does not link to the chain tip")]
    BrokenLink,
    #[error("header hash does not meet difficulty {0}")]
    InsufficientWork(u32),
    #[error("header fields do not match the chain (version, chain id or difficulty)")]
    HeaderMismatch,
    #[error("block timestamp {got} precedes tip timestamp {tip}")]
    TimestampRegression { got: u32, tip: u32 },
    #[error("committed state root does not match replayed state")]
    RootMismatch,
    #[error("nonce space exhausted at difficulty {0}")]
    NonceExhausted(u32),
    #[error("quorum needs at least one vote")]
    NoVotes,
    #[error("merkle: {0}")]
    Merkle(#[from] MerkleError),
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("chain file: {0}")]
    File(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("block {height}: {error}")]
pub struct ValidationError {
    pub height: usize,
    pub error: LedgerError,
}

#[derive(Clone, Debug)]
enum State {
    Log { tree: AppendTree, index: HashMap<Digest, usize> },
    Lex(LexTree),
}

#[derive(Clone, Debug)]
pub struct Chain {
    config: ChainConfig,
    blocks: Vec<Block>,
    state: State,
}

impl Chain {
    pub fn new(config: ChainConfig) -> Self {
        let state = match config.kind {
            ChainKind::RevBc => State::Lex(LexTree::new()),
            _ => State::Log { tree: AppendTree::new(), index: HashMap::new() },
        };
        Self { config, blocks: Vec::new(), state }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn kind(&self) -> ChainKind {
        self.config.kind
    }

    pub fn height(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map_or(Digest::default(), |b| b.header.hash())
    }

    /// Current cumulative state root.
    pub fn state_root(&self) -> Digest {
        match &self.state {
            State::Log { tree, .. } => tree.root(),
            State::Lex(t) => t.root(),
        }
    }

    /// Root committed by the block at `height` (1-based; 0 is the empty state).
    pub fn root_at(&self, height: usize) -> Option<Digest> {
        match height {
            0 => Some(Chain::new(self.config).state_root()),
            h => self.blocks.get(h - 1).map(|b| b.header.payload_root),
        }
    }

    pub fn append_tree(&self) -> Option<&AppendTree> {
        match &self.state {
            State::Log { tree, .. } => Some(tree),
            State::Lex(_) => None,
        }
    }

    pub fn lex_tree(&self) -> Option<&LexTree> {
        match &self.state {
            State::Lex(t) => Some(t),
            State::Log { .. } => None,
        }
    }

    /// Leaf index of a record in an append-tree chain.
    pub fn leaf_index(&self, record: &Record) -> Option<usize> {
        match &self.state {
            State::Log { index, .. } => index.get(&AppendTree::leaf_digest(&record.leaf_bytes())).copied(),
            State::Lex(_) => None,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.blocks.iter().flat_map(|b| b.records.iter())
    }

    /// Checks one record against this chain's type and trust anchors.
    /// Duplicates are detected only when a block is built.
    pub fn check_record(&self, record: &Record) -> Result<(), RecordError> {
        let anchors = &self.config.anchors;
        match (self.config.kind, record) {
            (ChainKind::CerBc, Record::Certificate(c)) => {
                if c.pu_ca != anchors.ca || c.pu_lea != anchors.lea {
                    return Err(RecordError::UntrustedIssuer);
                }
                if !c.signatures_valid() {
                    return Err(RecordError::BadSignature);
                }
            }
            (ChainKind::RevBc, Record::Revocation(r)) => {
                if r.pu_ca != anchors.ca || r.pu_lea != anchors.lea {
                    return Err(RecordError::UntrustedIssuer);
                }
                if !r.signatures_valid() {
                    return Err(RecordError::BadSignature);
                }
            }
            (ChainKind::MesBc, Record::Message(m)) => {
                if !m.signature_valid() {
                    return Err(RecordError::BadSignature);
                }
            }
            (kind, _) => return Err(RecordError::WrongChain(kind)),
        }
        Ok(())
    }

    /// Validates records and computes the root the state would have after
    /// applying them at `timestamp`.
    fn preview(&self, records: &[Record], timestamp: u32) -> Result<Digest, LedgerError> {
        for (i, r) in records.iter().enumerate() {
            self.check_record(r).map_err(|reason| LedgerError::InvalidRecord { index: i, reason })?;
        }
        match &self.state {
            State::Log { tree, index } => {
                let mut seen = std::collections::HashSet::new();
                let mut leaves = Vec::with_capacity(records.len());
                for (i, r) in records.iter().enumerate() {
                    let d = AppendTree::leaf_digest(&r.leaf_bytes());
                    if index.contains_key(&d) || !seen.insert(d) {
                        return Err(LedgerError::InvalidRecord { index: i, reason: RecordError::Duplicate });
                    }
                    leaves.push(d);
                }
                Ok(tree.root_after(&leaves))
            }
            State::Lex(t) => {
                let mut next = t.clone();
                Self::apply_lex(&mut next, records, timestamp, self.config.expiry_window_ms)?;
                Ok(next.root())
            }
        }
    }

    fn apply_lex(tree: &mut LexTree, records: &[Record], timestamp: u32, window: u64) -> Result<(), LedgerError> {
        tree.remove_expired(timestamp as u64 * 1000, window);
        let batch = records.iter().filter_map(|r| match r {
            Record::Revocation(rev) => Some(LexEntry { key: rev.pu_rev, rev_time: rev.t_rev }),
            _ => None,
        });
        tree.insert_batch(batch.collect::<Vec<_>>()).map_err(|e| match e {
            MerkleError::DuplicateKey(_) => LedgerError::InvalidRecord { index: 0, reason: RecordError::Duplicate },
            other => other.into(),
        })?;
        Ok(())
    }

    fn header_for(&self, payload_root: Digest, timestamp: u32) -> BlockHeader {
        BlockHeader {
            prev_hash: self.tip_hash(),
            payload_root,
            timestamp,
            nonce: 0,
            version: HEADER_VERSION,
            chain_id: self.config.kind.id(),
            difficulty: self.config.difficulty,
        }
    }

    /// Builds and mines the next block. The chain itself is not modified.
    pub fn mine_block(&self, records: Vec<Record>, timestamp: u32) -> Result<Block, LedgerError> {
        if let Some(tip) = self.blocks.last() {
            if timestamp < tip.header.timestamp {
                return Err(LedgerError::TimestampRegression { got: timestamp, tip: tip.header.timestamp });
            }
        }
        let root = self.preview(&records, timestamp)?;
        let mut header = self.header_for(root, timestamp);
        loop {
            if header.meets_difficulty() {
                return Ok(Block { header, records });
            }
            header.nonce = header.nonce.checked_add(1).ok_or(LedgerError::NonceExhausted(header.difficulty))?;
        }
    }

    /// Appends a block after full validation. On any error the chain is
    /// unchanged.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        let h = &block.header;
        if h.version != HEADER_VERSION || h.chain_id != self.config.kind.id() || h.difficulty != self.config.difficulty {
            return Err(LedgerError::HeaderMismatch);
        }
        if h.prev_hash != self.tip_hash() {
            return Err(LedgerError::BrokenLink);
        }
        if let Some(tip) = self.blocks.last() {
            if h.timestamp < tip.header.timestamp {
                return Err(LedgerError::TimestampRegression { got: h.timestamp, tip: tip.header.timestamp });
            }
        }
        if !h.meets_difficulty() {
            return Err(LedgerError::InsufficientWork(h.difficulty));
        }
        if self.preview(&block.records, h.timestamp)? != h.payload_root {
            return Err(LedgerError::RootMismatch);
        }

        let window = self.config.expiry_window_ms;
        match &mut self.state {
            State::Log { tree, index } => {
                for r in &block.records {
                    let (_, i) = tree.append(&r.leaf_bytes());
                    index.insert(tree.leaf(i).expect("just appended"), i);
                }
            }
            State::Lex(t) => Self::apply_lex(t, &block.records, h.timestamp, window)?,
        }
        debug_assert_eq!(self.state_root(), block.header.payload_root);
        self.blocks.push(block);
        Ok(())
    }

    /// Replays every block from genesis into a fresh chain.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut replay = Chain::new(self.config);
        for (height, block) in self.blocks.iter().enumerate() {
            replay.append_block(block.clone()).map_err(|error| ValidationError { height, error })?;
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

/// True iff strictly more than half of the RSUs accept.
pub fn quorum_accept(votes: &[bool]) -> Result<bool, LedgerError> {
    if votes.is_empty() {
        return Err(LedgerError::NoVotes);
    }
    let yes = votes.iter().filter(|v| **v).count();
    Ok(2 * yes > votes.len())
}
