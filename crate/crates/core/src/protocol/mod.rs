//! Registration, certificate update, revocation and authentication between
//! vehicles, the LEA, the CA and the roadside units.

mod auth;
mod authority;
pub mod messages;
mod rsu;
mod vehicle;

pub use auth::{authenticate, build_auth_packet, verify_broadcast, AuthContext, AuthPacket, RejectReason};
pub use authority::{
    cover_revocation, register, revoke_key, update_certificate, Ca, CaInput, IdentityProof, IdentityRecord, KeyHistoryEntry, Lea,
    RevocationReason,
};
pub use messages::{
    Certificate, RevocationMessage, RevocationOrder, SealedUpdateRequest, SignedMessage, UpdateReason,
    UpdateRequest, Warrant,
};
pub use rsu::{ChainSeal, RoadsideUnits, SealReport};
pub use vehicle::Vehicle;

use thiserror::Error;

use crate::merkleproofs::MerkleError;

/// Default certificate lifetime: thirty days in milliseconds.
pub const DEFAULT_CERT_VALIDITY_MS: u64 = 30 * 24 * 3600 * 1000;
/// Maximum age of a broadcast before receivers treat it as a replay.
pub const DEFAULT_FRESHNESS_MS: u64 = 5_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("identity material rejected")]
    InvalidIdentity,
    #[error("public key {0} is already registered")]
    DuplicateKey(String),
    #[error("public key {0} is not known to the LEA")]
    UnknownKey(String),
    #[error("public key {0} is already revoked")]
    AlreadyRevoked(String),
    #[error("signature check failed")]
    BadSignature,
    #[error("request could not be decrypted")]
    Undecryptable,
    #[error("malformed request")]
    Malformed,
    #[error("warrant signature invalid")]
    BadWarrant,
    #[error("certificate is not recorded in CerBC")]
    NotOnChain,
    #[error("key is revoked: {0}")]
    Revoked(MerkleError),
    #[error("vehicle holds no certificate")]
    NoCertificate,
}
