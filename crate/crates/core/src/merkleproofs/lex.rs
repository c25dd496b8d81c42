use std::cmp::Ordering;

use super::{
    build_levels, co_path, fold, path_shape, read_path, write_path, MerkleError, Step,
    PROOF_TYPE_ABSENCE, STEP_LEN, TAG_LEX_LEAF, TAG_LEX_ROOT,
};
use crate::codec::{DecodeError, Reader, Writer};
use crate::sigcrypt::{hash_parts, Digest, PublicKey, PUBLIC_KEY_LEN};

/// Encoded width of a key slot in absence proofs.
pub const BOUND_LEN: usize = 33;
/// Key slot, revocation time and leaf index.
pub const BOUNDARY_ENTRY_LEN: usize = BOUND_LEN + 8 + 4;

const MAX_BYTES: [u8; BOUND_LEN] = [0xFF; BOUND_LEN];

/// A position in the key space. `Min` is the empty byte string and `Max` is
/// 33 bytes of `0xFF`; both bracket every 32-byte key, so the derived order
/// is plain lexicographic order over `as_bytes()`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum LexBound {
    Min,
    Key(PublicKey),
    Max,
}

impl LexBound {
    pub fn as_bytes(&self) -> &[u8] {
        match self {
            LexBound::Min => &[],
            LexBound::Key(k) => k.as_bytes(),
            LexBound::Max => &MAX_BYTES,
        }
    }

    fn encode(&self, w: &mut Writer) {
        match self {
            LexBound::Min => w.raw(&[0u8; BOUND_LEN]),
            LexBound::Key(k) => w.u8(PUBLIC_KEY_LEN as u8).raw(k.as_bytes()),
            LexBound::Max => w.raw(&MAX_BYTES),
        };
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let raw: [u8; BOUND_LEN] = r.array()?;
        match raw[0] {
            0x00 if raw.iter().all(|&b| b == 0) => Ok(LexBound::Min),
            0xFF if raw == MAX_BYTES => Ok(LexBound::Max),
            n if n as usize == PUBLIC_KEY_LEN => {
                Ok(LexBound::Key(PublicKey::from_slice(&raw[1..]).expect("32 bytes")))
            }
            _ => Err(r.invalid("key slot")),
        }
    }
}

/// A revoked key and the time it was revoked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LexEntry {
    pub key: PublicKey,
    pub rev_time: u64,
}

fn leaf_digest(bound: &LexBound, rev_time: u64) -> Digest {
    hash_parts(&[&[TAG_LEX_LEAF], bound.as_bytes(), &rev_time.to_be_bytes()])
}

fn commit(leaf_count: usize, top: &Digest) -> Digest {
    hash_parts(&[&[TAG_LEX_ROOT], &(leaf_count as u64).to_be_bytes(), top.as_bytes()])
}

/// Lexicographically ordered Merkle tree of revoked keys.
///
/// The leaf sequence is `[Min, k_1, .., k_m, Max]` with sentinels at time 0.
/// The published root also commits the leaf count, which is what lets a
/// verifier check that two boundary leaves are neighbours.
#[derive(Clone, Debug)]
pub struct LexTree {
    entries: Vec<LexEntry>,
    levels: Vec<Vec<Digest>>,
}

impl Default for LexTree {
    fn default() -> Self {
        Self::new()
    }
}

impl LexTree {
    pub fn new() -> Self {
        Self::from_sorted(Vec::new())
    }

    /// Builds a tree from entries in any order. Later duplicates are rejected.
    pub fn from_entries(mut entries: Vec<LexEntry>) -> Result<Self, MerkleError> {
        entries.sort_by_key(|e| e.key);
        if let Some(w) = entries.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(MerkleError::DuplicateKey(w[0].key.fingerprint()));
        }
        Ok(Self::from_sorted(entries))
    }

    fn from_sorted(entries: Vec<LexEntry>) -> Self {
        let mut tree = Self { entries, levels: Vec::new() };
        tree.rebuild();
        tree
    }

    fn rebuild(&mut self) {
        let mut leaves = Vec::with_capacity(self.entries.len() + 2);
        leaves.push(leaf_digest(&LexBound::Min, 0));
        leaves.extend(self.entries.iter().map(|e| leaf_digest(&LexBound::Key(e.key), e.rev_time)));
        leaves.push(leaf_digest(&LexBound::Max, 0));
        self.levels = build_levels(leaves);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn leaf_count(&self) -> usize {
        self.entries.len() + 2
    }

    pub fn contains(&self, key: &PublicKey) -> bool {
        self.search(key).is_ok()
    }

    fn search(&self, key: &PublicKey) -> Result<usize, usize> {
        self.entries.binary_search_by(|e| e.key.cmp(key))
    }

    pub fn root(&self) -> Digest {
        commit(self.leaf_count(), &self.levels.last().expect("never empty")[0])
    }

    pub fn insert(&mut self, key: PublicKey, rev_time: u64) -> Result<Digest, MerkleError> {
        self.insert_batch([LexEntry { key, rev_time }])
    }

    /// Inserts several keys with a single rebuild. Either all are inserted or
    /// none are.
    pub fn insert_batch(&mut self, batch: impl IntoIterator<Item = LexEntry>) -> Result<Digest, MerkleError> {
        let mut merged = self.entries.clone();
        for e in batch {
            match merged.binary_search_by(|x| x.key.cmp(&e.key)) {
                Ok(_) => return Err(MerkleError::DuplicateKey(e.key.fingerprint())),
                Err(pos) => merged.insert(pos, e),
            }
        }
        self.entries = merged;
        self.rebuild();
        Ok(self.root())
    }

    /// Removes every entry with `rev_time + expiry_window <= now`.
    pub fn remove_expired(&mut self, now: u64, expiry_window: u64) -> Digest {
        let before = self.entries.len();
        self.entries.retain(|e| e.rev_time.saturating_add(expiry_window) > now);
        if self.entries.len() != before {
            self.rebuild();
        }
        self.root()
    }

    pub fn prove_absence(&self, target: &PublicKey) -> Result<AbsenceProof, MerkleError> {
        let pos = match self.search(target) {
            Ok(_) => return Err(MerkleError::KeyPresent(target.fingerprint())),
            Err(pos) => pos,
        };
        // Leaf `pos` is the greatest entry below the target (or Min).
        let lower_index = pos;
        let upper_index = pos + 1;
        let junction = junction_height(lower_index, upper_index);

        let lower_path: Vec<Step> = co_path(&self.levels, lower_index).into_iter().map(|(_, s)| s).collect();
        let upper_path: Vec<Step> = co_path(&self.levels, upper_index)
            .into_iter()
            .take_while(|(h, _)| *h + 1 < junction)
            .map(|(_, s)| s)
            .collect();

        Ok(AbsenceProof {
            leaf_count: self.leaf_count() as u32,
            lower: self.boundary(lower_index),
            upper: self.boundary(upper_index),
            lower_path,
            upper_path,
        })
    }

    fn boundary(&self, leaf_index: usize) -> BoundaryEntry {
        let (bound, rev_time) = if leaf_index == 0 {
            (LexBound::Min, 0)
        } else if leaf_index == self.leaf_count() - 1 {
            (LexBound::Max, 0)
        } else {
            let e = self.entries[leaf_index - 1];
            (LexBound::Key(e.key), e.rev_time)
        };
        BoundaryEntry { bound, rev_time, index: leaf_index as u32 }
    }
}

/// Lowest level at which leaves `a` and `b` share an ancestor.
fn junction_height(a: usize, b: usize) -> usize {
    let mut h = 0;
    while (a >> h) != (b >> h) {
        h += 1;
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryEntry {
    pub bound: LexBound,
    pub rev_time: u64,
    pub index: u32,
}

impl BoundaryEntry {
    fn encode(&self, w: &mut Writer) {
        self.bound.encode(w);
        w.u64(self.rev_time).u32(self.index);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self { bound: LexBound::decode(r)?, rev_time: r.u64()?, index: r.u32()? })
    }
}

/// Two neighbouring leaves that straddle the target, with their co-paths.
///
/// `upper_path` holds only the steps below the level where the two paths
/// meet; above that point the upper leaf shares `lower_path`, and at the
/// meeting level its subtree hash is the sibling recorded in `lower_path`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AbsenceProof {
    pub leaf_count: u32,
    pub lower: BoundaryEntry,
    pub upper: BoundaryEntry,
    pub lower_path: Vec<Step>,
    pub upper_path: Vec<Step>,
}

impl AbsenceProof {
    pub fn encoded_len(&self) -> usize {
        1 + 4 + 2 * BOUNDARY_ENTRY_LEN + 2 + 2 + STEP_LEN * (self.lower_path.len() + self.upper_path.len())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u8(PROOF_TYPE_ABSENCE).u32(self.leaf_count);
        self.lower.encode(w);
        self.upper.encode(w);
        write_path(w, &self.lower_path);
        write_path(w, &self.upper_path);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.u8()? != PROOF_TYPE_ABSENCE {
            return Err(r.invalid("absence proof type"));
        }
        Ok(Self {
            leaf_count: r.u32()?,
            lower: BoundaryEntry::decode(r)?,
            upper: BoundaryEntry::decode(r)?,
            lower_path: read_path(r)?,
            upper_path: read_path(r)?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// Checks that both boundary leaves authenticate against `root` at
/// consecutive indices and that they straddle `target`.
pub fn verify_absence(root: &Digest, target: &PublicKey, proof: &AbsenceProof) -> bool {
    let count = proof.leaf_count as usize;
    let lo = proof.lower.index as usize;
    let hi = proof.upper.index as usize;
    if count < 2 || lo + 1 != hi || hi >= count {
        return false;
    }
    let t = LexBound::Key(*target);
    if proof.lower.bound.cmp(&t) != Ordering::Less || t.cmp(&proof.upper.bound) != Ordering::Less {
        return false;
    }
    // Sentinels only ever sit at the two ends of the leaf sequence.
    let sentinel_ok = |b: &BoundaryEntry, idx: usize| match b.bound {
        LexBound::Min => idx == 0 && b.rev_time == 0,
        LexBound::Max => idx == count - 1 && b.rev_time == 0,
        LexBound::Key(_) => idx != 0 && idx != count - 1,
    };
    if !sentinel_ok(&proof.lower, lo) || !sentinel_ok(&proof.upper, hi) {
        return false;
    }

    let lower_shape = path_shape(lo, count);
    if lower_shape.len() != proof.lower_path.len()
        || lower_shape.iter().zip(&proof.lower_path).any(|((_, d), s)| *d != s.dir)
    {
        return false;
    }
    let lower_leaf = leaf_digest(&proof.lower.bound, proof.lower.rev_time);
    if commit(count, &fold(lower_leaf, &proof.lower_path)) != *root {
        return false;
    }

    let junction = junction_height(lo, hi);
    let upper_shape: Vec<_> = path_shape(hi, count).into_iter().take_while(|(h, _)| h + 1 < junction).collect();
    if upper_shape.len() != proof.upper_path.len()
        || upper_shape.iter().zip(&proof.upper_path).any(|((_, d), s)| *d != s.dir)
    {
        return false;
    }
    let Some(meeting) = lower_shape.iter().position(|(h, _)| h + 1 == junction) else {
        return false;
    };
    let upper_leaf = leaf_digest(&proof.upper.bound, proof.upper.rev_time);
    fold(upper_leaf, &proof.upper_path) == proof.lower_path[meeting].sibling
}
