//! Reference algorithm suite: claw-free tree signatures, Cramer-Shoup key
//! encapsulation and the squaring-generator pseudo-one-time pad, bundled as
//! versioned, swappable [`AlgorithmSuite`]s.

pub mod arith;
mod cs;
mod gmr;
mod keystream;
mod registry;
mod suite;

use thiserror::Error;

pub use cs::{
    cs_decapsulate, cs_encapsulate, cs_encapsulate_with, cs_keygen, CsCiphertext, DecapError,
    EncapsKeyPair, EncapsPublicKey, EncapsSecretKey,
};
pub use gmr::{
    gmr_keygen, gmr_verify, verify_parsed, ClawFreePair, GmrPublicKey, GmrSecret, SignError,
    Signature, SignatureKeyPair,
};
pub use keystream::{
    apply_keystream, initial_state, keystream, potp_xor, KeystreamError, SquaringGenerator,
};
pub use registry::{RegistryError, SuiteRegistry};
pub use suite::{
    blum_modulus, blum_williams_modulus, generate_suite, generate_suite_with, toy_suite,
    AlgorithmSuite, GroupParams, HashId, PinnedPrimes, SecurityLevel, SignatureParams,
    StreamParams, SuiteId, SuiteOptions, SuiteWitness, DEFAULT_TREE_DEPTH, SUITE_MAGIC,
    TOY_TREE_DEPTH,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("unsupported security size {0} (expected 32, 512, 1024 or 2048)")]
    UnsupportedSize(u32),
    #[error("invalid suite parameters: {0}")]
    Invalid(String),
}

pub const SYMMETRIC_KEY_LEN: usize = 32;

/// A 32-byte symmetric key bound to the suite that produced it. The bytes
/// are overwritten on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    bytes: [u8; SYMMETRIC_KEY_LEN],
    suite_id: SuiteId,
}

impl SymmetricKey {
    pub fn new(bytes: [u8; SYMMETRIC_KEY_LEN], suite_id: SuiteId) -> Self {
        SymmetricKey { bytes, suite_id }
    }

    pub fn from_slice(bytes: &[u8], suite_id: SuiteId) -> Option<Self> {
        Some(Self::new(bytes.try_into().ok()?, suite_id))
    }

    pub fn as_bytes(&self) -> &[u8; SYMMETRIC_KEY_LEN] {
        &self.bytes
    }

    pub fn suite_id(&self) -> SuiteId {
        self.suite_id
    }
}

/// Overwrites `buf` with zeros in a way the optimizer will not elide.
pub fn wipe(buf: &mut [u8]) {
    for b in buf.iter_mut() {
        // SAFETY: `b` is a valid, aligned, exclusive reference.
        unsafe { std::ptr::write_volatile(b, 0) };
    }
    std::sync::atomic::compiler_fence(std::sync::atomic::Ordering::SeqCst);
}

impl Drop for SymmetricKey {
    fn drop(&mut self) {
        wipe(&mut self.bytes);
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("suite_id", &self.suite_id)
            .finish_non_exhaustive()
    }
}
