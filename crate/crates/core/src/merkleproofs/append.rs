use super::{
    build_levels, co_path, fold, interior, read_path, write_path, Dir, MerkleError, Step,
    PROOF_TYPE_PRESENCE, STEP_LEN, TAG_APPEND_LEAF,
};
use crate::codec::{DecodeError, Reader, Writer};
use crate::sigcrypt::{hash, hash_parts, Digest};

/// Append-only Merkle log. Every level is kept so proofs are O(log n) to
/// extract and appends only touch the right spine.
#[derive(Clone, Debug, Default)]
pub struct AppendTree {
    levels: Vec<Vec<Digest>>,
}

impl AppendTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf_digest(record: &[u8]) -> Digest {
        hash_parts(&[&[TAG_APPEND_LEAF], record])
    }

    /// Root of an empty tree.
    pub fn empty_root() -> Digest {
        hash(&[])
    }

    pub fn len(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn root(&self) -> Digest {
        match self.levels.last() {
            Some(top) if !top.is_empty() => top[0],
            _ => Self::empty_root(),
        }
    }

    pub fn leaf(&self, index: usize) -> Option<Digest> {
        self.levels.first().and_then(|l| l.get(index)).copied()
    }

    /// Hashes `record` as a leaf and appends it. Returns the new root and the
    /// leaf index.
    pub fn append(&mut self, record: &[u8]) -> (Digest, usize) {
        self.append_digest(Self::leaf_digest(record))
    }

    /// Appends an already tagged leaf digest.
    pub fn append_digest(&mut self, leaf: Digest) -> (Digest, usize) {
        if self.levels.is_empty() {
            self.levels.push(Vec::new());
        }
        self.levels[0].push(leaf);
        let index = self.levels[0].len() - 1;

        let mut height = 0;
        loop {
            let len = self.levels[height].len();
            if len == 1 {
                self.levels.truncate(height + 1);
                break;
            }
            let last = len - 1;
            let node = if last % 2 == 1 {
                interior(&self.levels[height][last - 1], &self.levels[height][last])
            } else {
                self.levels[height][last]
            };
            if self.levels.len() == height + 1 {
                self.levels.push(Vec::new());
            }
            let up = &mut self.levels[height + 1];
            let parent = last / 2;
            if parent < up.len() {
                up[parent] = node;
            } else {
                up.push(node);
            }
            height += 1;
        }
        (self.root(), index)
    }

    /// Root the tree would have after appending `extra` leaf digests, without
    /// mutating it. Only the nodes to the right of the current frontier are
    /// recomputed.
    pub fn root_after(&self, extra: &[Digest]) -> Digest {
        if extra.is_empty() {
            return self.root();
        }
        if self.is_empty() {
            return extra.iter().copied().collect::<AppendTree>().root();
        }
        let mut start = self.len();
        let mut len = start + extra.len();
        let mut suffix = extra.to_vec();
        let mut height = 0;
        while len > 1 {
            let next = {
                let get = |i: usize| if i >= start { suffix[i - start] } else { self.levels[height][i] };
                let parent_len = len.div_ceil(2);
                (start / 2..parent_len)
                    .map(|p| if 2 * p + 1 < len { interior(&get(2 * p), &get(2 * p + 1)) } else { get(2 * p) })
                    .collect::<Vec<_>>()
            };
            suffix = next;
            start /= 2;
            len = len.div_ceil(2);
            height += 1;
        }
        suffix[0]
    }

    /// Drops leaves beyond `len`. Used to roll back a rejected block.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len() {
            return;
        }
        let mut leaves = std::mem::take(&mut self.levels[0]);
        leaves.truncate(len);
        self.levels = if leaves.is_empty() { Vec::new() } else { build_levels(leaves) };
    }

    pub fn prove_presence(&self, index: usize) -> Result<PresenceProof, MerkleError> {
        if index >= self.len() {
            return Err(MerkleError::IndexOutOfRange { index, len: self.len() });
        }
        Ok(PresenceProof { steps: co_path(&self.levels, index).into_iter().map(|(_, s)| s).collect() })
    }
}

impl FromIterator<Digest> for AppendTree {
    fn from_iter<I: IntoIterator<Item = Digest>>(iter: I) -> Self {
        let leaves: Vec<Digest> = iter.into_iter().collect();
        if leaves.is_empty() {
            Self::new()
        } else {
            Self { levels: build_levels(leaves) }
        }
    }
}

/// Sibling directions and hashes from leaf to root.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PresenceProof {
    pub steps: Vec<Step>,
}

impl PresenceProof {
    pub fn dirs(&self) -> Vec<Dir> {
        self.steps.iter().map(|s| s.dir).collect()
    }

    pub fn hashes(&self) -> Vec<Digest> {
        self.steps.iter().map(|s| s.sibling).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn encoded_len(&self) -> usize {
        1 + 2 + STEP_LEN * self.steps.len()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u8(PROOF_TYPE_PRESENCE);
        write_path(w, &self.steps);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        if r.u8()? != PROOF_TYPE_PRESENCE {
            return Err(r.invalid("presence proof type"));
        }
        Ok(Self { steps: read_path(r)? })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::decode(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// True iff folding the leaf up the proof reproduces `root`.
pub fn verify_presence(root: &Digest, record: &[u8], proof: &PresenceProof) -> bool {
    fold(AppendTree::leaf_digest(record), &proof.steps) == *root
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent recursive recompute: split at the largest power of two
    /// is NOT this layout, so mirror the pairing rule directly.
    fn oracle_root(leaves: &[Digest]) -> Digest {
        if leaves.is_empty() {
            return hash(&[]);
        }
        let mut level = leaves.to_vec();
        while level.len() > 1 {
            let mut next = Vec::new();
            let mut i = 0;
            while i < level.len() {
                if i + 1 < level.len() {
                    let mut pre = vec![0x01u8];
                    pre.extend_from_slice(level[i].as_bytes());
                    pre.extend_from_slice(level[i + 1].as_bytes());
                    next.push(hash(&pre));
                } else {
                    next.push(level[i]);
                }
                i += 2;
            }
            level = next;
        }
        level[0]
    }

    fn records(n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|i| format!("C_{}", i + 1).into_bytes()).collect()
    }

    #[test]
    fn single_leaf_root_is_leaf_digest() {
        let mut t = AppendTree::new();
        let (root, idx) = t.append(b"only");
        assert_eq!(idx, 0);
        assert_eq!(root, AppendTree::leaf_digest(b"only"));
        let p = t.prove_presence(0).unwrap();
        assert!(p.is_empty());
        assert!(verify_presence(&root, b"only", &p));
    }

    #[test]
    fn incremental_root_matches_oracle() {
        let mut t = AppendTree::new();
        let mut digests = Vec::new();
        for r in records(70) {
            digests.push(AppendTree::leaf_digest(&r));
            let (root, _) = t.append(&r);
            assert_eq!(root, oracle_root(&digests), "after {} leaves", digests.len());
        }
    }

    #[test]
    fn root_after_matches_real_append() {
        for base in 0..20 {
            for extra in 0..12 {
                let recs = records(base + extra);
                let digests: Vec<Digest> = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
                let t: AppendTree = digests[..base].iter().copied().collect();
                assert_eq!(t.root_after(&digests[base..]), oracle_root(&digests), "base={base} extra={extra}");
            }
        }
    }

    #[test]
    fn append_keeps_earlier_leaves() {
        let mut t = AppendTree::new();
        t.append(b"first");
        let d0 = t.leaf(0).unwrap();
        for r in records(9) {
            t.append(&r);
        }
        assert_eq!(t.leaf(0), Some(d0));
    }

    #[test]
    fn eight_leaf_example_path() {
        let mut t = AppendTree::new();
        let recs = records(8);
        for r in &recs {
            t.append(r);
        }
        let p = t.prove_presence(3).unwrap();
        assert_eq!(p.dirs(), vec![Dir::Left, Dir::Left, Dir::Right]);
        let d: Vec<Digest> = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
        let h12 = interior(&d[0], &d[1]);
        let h5678 = interior(&interior(&d[4], &d[5]), &interior(&d[6], &d[7]));
        assert_eq!(p.hashes(), vec![d[2], h12, h5678]);
        assert!(verify_presence(&t.root(), &recs[3], &p));
    }

    #[test]
    fn out_of_range_index() {
        let t: AppendTree = records(3).iter().map(|r| AppendTree::leaf_digest(r)).collect();
        assert_eq!(t.prove_presence(3), Err(MerkleError::IndexOutOfRange { index: 3, len: 3 }));
    }

    #[test]
    fn every_index_of_five_leaf_tree_verifies() {
        let recs = records(5);
        let t: AppendTree = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
        let digests: Vec<_> = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
        assert_eq!(t.root(), oracle_root(&digests));
        for (i, r) in recs.iter().enumerate() {
            assert!(verify_presence(&t.root(), r, &t.prove_presence(i).unwrap()));
        }
    }

    #[test]
    fn any_sibling_byte_flip_rejected() {
        let recs = records(8);
        let t: AppendTree = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
        let p = t.prove_presence(5).unwrap();
        for s in 0..p.steps.len() {
            for b in 0..32 {
                let mut bad = p.clone();
                let mut bytes = *bad.steps[s].sibling.as_bytes();
                bytes[b] ^= 0x80;
                bad.steps[s].sibling = Digest::from_bytes(bytes);
                assert!(!verify_presence(&t.root(), &recs[5], &bad));
            }
        }
    }

    #[test]
    fn cross_index_proofs_rejected() {
        let recs = records(8);
        let t: AppendTree = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
        for i in 0..8 {
            let p = t.prove_presence(i).unwrap();
            for (j, r) in recs.iter().enumerate() {
                assert_eq!(verify_presence(&t.root(), r, &p), i == j);
            }
        }
    }

    #[test]
    fn truncate_restores_prior_root() {
        let mut t = AppendTree::new();
        for r in records(6) {
            t.append(&r);
        }
        let root6 = t.root();
        for r in records(5) {
            t.append(&r);
        }
        t.truncate(6);
        assert_eq!(t.root(), root6);
        t.truncate(0);
        assert_eq!(t.root(), AppendTree::empty_root());
    }

    proptest::proptest! {
        #[test]
        fn wire_round_trip(n in 1usize..40, pick in 0usize..40) {
            let recs = records(n);
            let t: AppendTree = recs.iter().map(|r| AppendTree::leaf_digest(r)).collect();
            let p = t.prove_presence(pick % n).unwrap();
            let bytes = p.to_bytes();
            proptest::prop_assert_eq!(bytes.len(), p.encoded_len());
            proptest::prop_assert_eq!(PresenceProof::from_bytes(&bytes).unwrap(), p);
        }
    }
}
