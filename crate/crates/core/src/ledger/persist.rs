//! Chain files.
//!
//! ```text
//! magic "BARSCHN1"            8
//! chain id                    u16
//! difficulty                  u32
//! revocation expiry window    u64 (ms)
//! CA key, LEA key             32 + 32
//! block count                 u32
//! per block:
//!   header                    80
//!   record count              u32
//!   per record: length u32, record bytes
//! head commitment             32 = H("bars-chain-head" ‖ preamble ‖ tip header hash)
//! ```
//!
//! All integers are big-endian. The head commitment pins the chain
//! parameters and the tip header, which no successor block links to.

use super::{Block, BlockHeader, Chain, ChainConfig, ChainKind, LedgerError, Record, TrustAnchors, HEADER_LEN};
use crate::codec::{Reader, Writer};
use crate::sigcrypt::{hash_parts, Digest, PublicKey};

pub const FILE_MAGIC: &[u8; 8] = b"BARSCHN1";
const PREAMBLE_LEN: usize = 8 + 2 + 4 + 8 + 32 + 32 + 4;

fn head_commitment(preamble: &[u8], tip: &Digest) -> Digest {
    hash_parts(&[b"bars-chain-head", preamble, tip.as_bytes()])
}

pub fn save_chain(chain: &Chain) -> Vec<u8> {
    let cfg = chain.config();
    let mut w = Writer::new();
    w.raw(FILE_MAGIC)
        .u16(cfg.kind.id())
        .u32(cfg.difficulty)
        .u64(cfg.expiry_window_ms)
        .raw(cfg.anchors.ca.as_bytes())
        .raw(cfg.anchors.lea.as_bytes())
        .u32(chain.height() as u32);
    for block in chain.blocks() {
        w.raw(&block.header.to_bytes()).u32(block.records.len() as u32);
        for r in &block.records {
            w.bytes(&r.to_bytes());
        }
    }
    let mut bytes = w.finish();
    let head = head_commitment(&bytes[..PREAMBLE_LEN], &chain.tip_hash());
    bytes.extend_from_slice(head.as_bytes());
    bytes
}

/// Parses and fully re-validates a chain file.
pub fn load_chain(bytes: &[u8]) -> Result<Chain, LedgerError> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != FILE_MAGIC {
        return Err(LedgerError::File("bad magic".into()));
    }
    let kind = ChainKind::from_id(r.u16()?).ok_or_else(|| LedgerError::File("unknown chain id".into()))?;
    let difficulty = r.u32()?;
    let expiry_window_ms = r.u64()?;
    let ca = PublicKey::from_bytes(r.array()?);
    let lea = PublicKey::from_bytes(r.array()?);
    let count = r.u32()? as usize;

    let config = ChainConfig { kind, anchors: TrustAnchors { ca, lea }, difficulty, expiry_window_ms };
    let mut chain = Chain::new(config);
    for height in 0..count {
        let header = BlockHeader::from_bytes(&r.array::<HEADER_LEN>()?);
        let n = r.u32()? as usize;
        if n > r.remaining() / 4 {
            return Err(LedgerError::File(format!("block {height}: record count {n} exceeds file size")));
        }
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            records.push(Record::from_bytes(r.bytes()?)?);
        }
        chain.append_block(Block { header, records })?;
    }
    let head = Digest::from_bytes(r.array()?);
    r.finish()?;
    if head != head_commitment(&bytes[..PREAMBLE_LEN], &chain.tip_hash()) {
        return Err(LedgerError::File("head commitment mismatch".into()));
    }
    Ok(chain)
}

/// One JSON object per line: a preamble line, then each block with its
/// header fields and records.
pub fn dump_chain(chain: &Chain) -> String {
    let mut out = String::new();
    let pre = serde_json::json!({
        "chain": chain.kind().name(),
        "height": chain.height(),
        "difficulty": chain.config().difficulty,
        "expiry_window_ms": chain.config().expiry_window_ms,
        "anchors": chain.config().anchors,
        "state_root": chain.state_root(),
    });
    out.push_str(&pre.to_string());
    out.push('\n');
    for (height, block) in chain.blocks().iter().enumerate() {
        let line = serde_json::json!({
            "height": height + 1,
            "hash": block.header.hash(),
            "header": block.header,
            "records": block.records,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
