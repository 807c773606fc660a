use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use super::cert::{Certificate, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum RejectReason {
    #[error("expired")]
    Expired,
    #[error("bad-signature")]
    BadSignature,
    #[error("unknown-issuer")]
    UnknownIssuer,
    #[error("not-yet-valid")]
    NotYetValid,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Expired => "expired",
            RejectReason::BadSignature => "bad-signature",
            RejectReason::UnknownIssuer => "unknown-issuer",
            RejectReason::NotYetValid => "not-yet-valid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }

    pub fn into_result(self) -> Result<(), RejectReason> {
        match self {
            Verdict::Accept => Ok(()),
            Verdict::Reject(r) => Err(r),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("accept"),
            Verdict::Reject(r) => write!(f, "reject({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("trust roots must be self-signed RSMS certificates")]
    NotARoot,
    #[error("root certificate self-signature does not verify")]
    BadRootSignature,
    #[error("certificate rejected: {0}")]
    Rejected(RejectReason),
}

/// Trust anchors plus a cache of end-entity certificates that chained to one
/// of them when inserted.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    roots: BTreeMap<String, Certificate>,
    cache: BTreeMap<String, Certificate>,
}

pub type SharedTrustStore = Arc<RwLock<TrustStore>>;

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_root(root: Certificate) -> Result<Self, TrustError> {
        let mut store = Self::new();
        store.add_root(root)?;
        Ok(store)
    }

    pub fn into_shared(self) -> SharedTrustStore {
        Arc::new(RwLock::new(self))
    }

    pub fn add_root(&mut self, cert: Certificate) -> Result<(), TrustError> {
        if !cert.is_self_signed() || cert.role != Role::Rsms {
            return Err(TrustError::NotARoot);
        }
        if !cert.signature_valid_under(&cert.sig_public) {
            return Err(TrustError::BadRootSignature);
        }
        self.roots.insert(cert.subject_id.clone(), cert);
        Ok(())
    }

    pub fn root(&self, id: &str) -> Option<&Certificate> {
        self.roots.get(id)
    }

    pub fn is_root(&self, id: &str) -> bool {
        self.roots.contains_key(id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Certificate> {
        self.roots.values()
    }

    /// Verifies `cert` at `now` and caches it under its subject id.
    pub fn cache_certificate(&mut self, cert: Certificate, now: u64) -> Result<(), TrustError> {
        verify_certificate(&cert, self, now)
            .into_result()
            .map_err(TrustError::Rejected)?;
        if !cert.is_self_signed() {
            self.cache.insert(cert.subject_id.clone(), cert);
        }
        Ok(())
    }

    /// A root or cached certificate for `subject`, but only while valid.
    pub fn lookup(&self, subject: &str, now: u64) -> Option<&Certificate> {
        self.roots
            .get(subject)
            .or_else(|| self.cache.get(subject))
            .filter(|c| c.covers(now))
    }

    pub fn prune(&mut self, now: u64) -> usize {
        let before = self.cache.len();
        self.cache.retain(|_, c| now <= c.valid_to);
        before - self.cache.len()
    }

    pub fn cached_len(&self) -> usize {
        self.cache.len()
    }
}

/// Accepts iff the certificate chains to a root (directly, or is a root) and
/// `now` lies in both its window and its issuer's.
pub fn verify_certificate(cert: &Certificate, store: &TrustStore, now: u64) -> Verdict {
    let Some(issuer) = store.roots.get(&cert.issuer_id) else {
        return Verdict::Reject(RejectReason::UnknownIssuer);
    };
    if cert.is_self_signed() && (cert.role != Role::Rsms || issuer != cert) {
        return Verdict::Reject(RejectReason::UnknownIssuer);
    }
    if !cert.signature_valid_under(&issuer.sig_public) {
        return Verdict::Reject(RejectReason::BadSignature);
    }
    for c in [cert, issuer] {
        if now < c.valid_from {
            return Verdict::Reject(RejectReason::NotYetValid);
        }
        if now > c.valid_to {
            return Verdict::Reject(RejectReason::Expired);
        }
    }
    Verdict::Accept
}
