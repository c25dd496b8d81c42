//! Authenticated data structures behind the certificate and revocation chains.
//!
//! Both trees share one binary Merkle layout: level 0 holds the leaf digests,
//! each higher level pairs adjacent nodes, and the last node of an odd-sized
//! level is promoted unchanged. The parent of node `i` is therefore always
//! `i >> 1`, which lets a verifier derive the exact path shape from a leaf
//! index and the leaf count.
//!
//! Domain tags keep leaves, interior nodes and the size commitment apart:
//!
//! | tag    | preimage                               |
//! |--------|----------------------------------------|
//! | `0x00` | append-tree leaf: record bytes         |
//! | `0x01` | interior node: left ‖ right            |
//! | `0x02` | lex-tree leaf: key ‖ u64 BE rev time   |
//! | `0x03` | lex-tree root: u64 BE leaf count ‖ top |

mod append;
mod lex;

pub use append::{verify_presence, AppendTree, PresenceProof};
pub use lex::{verify_absence, AbsenceProof, BoundaryEntry, LexBound, LexEntry, LexTree};

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::sigcrypt::{hash_parts, Digest};

pub(crate) const TAG_APPEND_LEAF: u8 = 0x00;
pub(crate) const TAG_INTERIOR: u8 = 0x01;
pub(crate) const TAG_LEX_LEAF: u8 = 0x02;
pub(crate) const TAG_LEX_ROOT: u8 = 0x03;

pub const PROOF_TYPE_PRESENCE: u8 = 0x01;
pub const PROOF_TYPE_ABSENCE: u8 = 0x02;

/// Serialized size of one path step: direction byte plus sibling digest.
pub const STEP_LEN: usize = 33;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for tree of {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("key {0} is already in the tree")]
    DuplicateKey(String),
    #[error("key {0} is present in the tree; no absence proof exists")]
    KeyPresent(String),
}

/// Which side the sibling sits on relative to the running hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    Left,
    Right,
}

impl Dir {
    fn to_byte(self) -> u8 {
        match self {
            Dir::Left => 0,
            Dir::Right => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Dir> {
        match b {
            0 => Some(Dir::Left),
            1 => Some(Dir::Right),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Step {
    pub dir: Dir,
    pub sibling: Digest,
}

pub(crate) fn interior(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[TAG_INTERIOR], left.as_bytes(), right.as_bytes()])
}

pub(crate) fn parent_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => interior(l, r),
            [single] => *single,
            _ => unreachable!(),
        })
        .collect()
}

/// All levels from the leaves up to the single top node.
pub(crate) fn build_levels(leaves: Vec<Digest>) -> Vec<Vec<Digest>> {
    let mut levels = vec![leaves];
    while levels.last().is_some_and(|l| l.len() > 1) {
        let next = parent_level(levels.last().unwrap());
        levels.push(next);
    }
    levels
}

/// Co-path for `index` with the level each step sits on.
pub(crate) fn co_path(levels: &[Vec<Digest>], index: usize) -> Vec<(usize, Step)> {
    let mut out = Vec::new();
    let mut idx = index;
    for (height, level) in levels.iter().enumerate().take(levels.len().saturating_sub(1)) {
        let sib = idx ^ 1;
        if sib < level.len() {
            let dir = if sib < idx { Dir::Left } else { Dir::Right };
            out.push((height, Step { dir, sibling: level[sib] }));
        }
        idx >>= 1;
    }
    out
}

/// Expected (level, direction) of every step on the path of `index` in a
/// tree with `count` leaves.
pub(crate) fn path_shape(index: usize, count: usize) -> Vec<(usize, Dir)> {
    let mut out = Vec::new();
    let (mut idx, mut len, mut height) = (index, count, 0);
    while len > 1 {
        let sib = idx ^ 1;
        if sib < len {
            out.push((height, if sib < idx { Dir::Left } else { Dir::Right }));
        }
        idx >>= 1;
        len = len.div_ceil(2);
        height += 1;
    }
    out
}

pub(crate) fn fold<'a>(leaf: Digest, steps: impl IntoIterator<Item = &'a Step>) -> Digest {
    steps.into_iter().fold(leaf, |acc, step| match step.dir {
        Dir::Left => interior(&step.sibling, &acc),
        Dir::Right => interior(&acc, &step.sibling),
    })
}

pub(crate) fn write_path(w: &mut Writer, steps: &[Step]) {
    w.u16(steps.len() as u16);
    for s in steps {
        w.u8(s.dir.to_byte()).raw(s.sibling.as_bytes());
    }
}

pub(crate) fn read_path(r: &mut Reader<'_>) -> Result<Vec<Step>, DecodeError> {
    let n = r.u16()? as usize;
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let dir = Dir::from_byte(r.u8()?).ok_or_else(|| r.invalid("path direction"))?;
        steps.push(Step { dir, sibling: Digest::from_bytes(r.array()?) });
    }
    Ok(steps)
}
