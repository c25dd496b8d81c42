//! Anonymous, blockchain-backed authentication and reputation for simulated
//! vehicular networks.
//!
//! - [`sigcrypt`]: hashing, Ed25519 signatures, sealed envelopes.
//! - [`merkleproofs`]: append-only presence tree and lexicographic absence tree.
//! - [`ledger`]: the certificate, revocation and message chains.
//! - [`protocol`]: registration, certificate update, revocation, authentication.
//! - [`reputation`]: reward/penalty functions and per-event judgment.
//! - [`simkit`]: deterministic scenario simulator, overhead model, benchmarks, plots.

pub mod codec;
pub mod ledger;
pub mod merkleproofs;
pub mod protocol;
pub mod reputation;
pub mod sigcrypt;
pub mod simkit;

pub use merkleproofs::{AbsenceProof, AppendTree, LexTree, PresenceProof};
pub use sigcrypt::{Digest, KeyPair, PublicKey, Signature};
