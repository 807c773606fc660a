//! Certificates, trust anchoring, capability white lists and operator
//! authentication.

mod caps;
mod cert;
mod dongle;
mod trust;

use thiserror::Error;

use crate::cryptosuite::SignError;

pub use caps::{check_capability, CapabilityList, Decision, PolicyParseError};
pub use cert::{
    issue_certificate, Certificate, Identity, Role, SubjectInfo, CERT_FORMAT_VERSION, CERT_MAGIC,
    IDENTITY_MAGIC,
};
pub use dongle::{
    authenticate_operator, AdminCredentials, AuthError, DeviceTrust, Dongle, OperatorSession,
    MAX_FAILURES,
};
pub use trust::{
    verify_certificate, RejectReason, SharedTrustStore, TrustError, TrustStore, Verdict,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("role {role} may not perform {operation}")]
    CapabilityDenied { role: String, operation: String },
    #[error("validity window [{from}, {to}] is empty")]
    InvertedWindow { from: u64, to: u64 },
    #[error("{0} is not an RSMS and cannot self-sign")]
    SelfSignedNonRoot(String),
    #[error(transparent)]
    Sign(#[from] SignError),
}
