//! Ownership-plus-password operator authentication.
//!
//! The dongle stores administrative credentials wrapped under
//! `H(share ‖ H(password))`. Neither the share nor the password alone
//! unwraps them.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cryptosuite::HashId;
use crate::nodes::ClassificationLabel;
use crate::wire::{Reader, WireError, Writer};

use super::cert::Role;

pub const MAX_FAILURES: u8 = 3;
const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("dongle not present")]
    Absent,
    #[error("dongle locked after repeated failures")]
    Locked,
    #[error("wrong password ({remaining} attempts left)")]
    WrongPassword { remaining: u8 },
    #[error("operator {0} is not enrolled on this device")]
    NotEnrolled(String),
    #[error("device reports tampering")]
    Tampered,
    #[error("credential block is malformed")]
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdminCredentials {
    pub operator_id: String,
    pub role: Role,
    pub clearance: ClassificationLabel,
}

impl AdminCredentials {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str16(&self.operator_id)
            .u8(self.role as u8)
            .u8(self.clearance.to_byte());
        w.into_bytes()
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let operator_id = r.str16("operator_id")?;
        let role = Role::from_u8(r.u8()?).ok_or_else(|| WireError::invalid("role", "unknown"))?;
        let clearance = ClassificationLabel::from_byte(r.u8()?)
            .ok_or_else(|| WireError::invalid("clearance", "unknown"))?;
        r.finish()?;
        Ok(AdminCredentials {
            operator_id,
            role,
            clearance,
        })
    }
}

#[derive(Clone)]
pub struct Dongle {
    pub operator_id: String,
    secret_share: [u8; 32],
    wrapped_admin_credentials: Vec<u8>,
    /// Simulated physical presence in the device slot.
    pub present: bool,
    failures: u8,
}

impl std::fmt::Debug for Dongle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dongle")
            .field("operator_id", &self.operator_id)
            .field("present", &self.present)
            .field("failures", &self.failures)
            .finish_non_exhaustive()
    }
}

fn kek(share: &[u8; 32], password: &str) -> [u8; 32] {
    let pw = HashId::Sha256.digest(&[b"dongle/pw", password.as_bytes()]);
    HashId::Sha256.digest(&[b"dongle/kek", share, &pw])
}

fn mask(kek: &[u8; 32], data: &[u8]) -> Vec<u8> {
    data.chunks(32)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let block = HashId::Sha256.digest(&[b"dongle/mask", kek, &(i as u32).to_be_bytes()]);
            chunk
                .iter()
                .zip(block)
                .map(|(a, b)| a ^ b)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn tag(kek: &[u8; 32], ct: &[u8]) -> [u8; 32] {
    HashId::Sha256.digest(&[b"dongle/tag", kek, ct])
}

impl Dongle {
    pub fn provision(
        secret_share: [u8; 32],
        password: &str,
        credentials: &AdminCredentials,
    ) -> Self {
        let k = kek(&secret_share, password);
        let mut wrapped = mask(&k, &credentials.encode());
        let t = tag(&k, &wrapped);
        wrapped.extend_from_slice(&t);
        Dongle {
            operator_id: credentials.operator_id.clone(),
            secret_share,
            wrapped_admin_credentials: wrapped,
            present: true,
            failures: 0,
        }
    }

    pub fn is_locked(&self) -> bool {
        self.failures >= MAX_FAILURES
    }

    pub fn failures(&self) -> u8 {
        self.failures
    }

    pub fn wrapped_credentials(&self) -> &[u8] {
        &self.wrapped_admin_credentials
    }

    fn unwrap_credentials(&self, password: &str) -> Option<Vec<u8>> {
        let blob = &self.wrapped_admin_credentials;
        if blob.len() < TAG_LEN {
            return None;
        }
        let (ct, t) = blob.split_at(blob.len() - TAG_LEN);
        let k = kek(&self.secret_share, password);
        (tag(&k, ct) == t).then(|| mask(&k, ct))
    }
}

/// What the device knows about who may log in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceTrust {
    pub enrolled_operators: BTreeSet<String>,
    pub tampered: bool,
}

impl DeviceTrust {
    pub fn enrolling<I, S>(operators: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DeviceTrust {
            enrolled_operators: operators.into_iter().map(Into::into).collect(),
            tampered: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSession {
    pub operator_id: String,
    pub role: Role,
    pub clearance: ClassificationLabel,
}

/// Absent and locked dongles fail without touching the counter; a wrong
/// password increments it and the third consecutive one locks the dongle.
pub fn authenticate_operator(
    dongle: &mut Dongle,
    password: &str,
    device: &DeviceTrust,
) -> Result<OperatorSession, AuthError> {
    if !dongle.present {
        return Err(AuthError::Absent);
    }
    if device.tampered {
        return Err(AuthError::Tampered);
    }
    if dongle.is_locked() {
        return Err(AuthError::Locked);
    }
    let Some(plain) = dongle.unwrap_credentials(password) else {
        dongle.failures += 1;
        return Err(AuthError::WrongPassword {
            remaining: MAX_FAILURES - dongle.failures,
        });
    };
    dongle.failures = 0;
    let creds = AdminCredentials::decode(&plain).map_err(|_| AuthError::Corrupt)?;
    if !device.enrolled_operators.contains(&creds.operator_id) {
        return Err(AuthError::NotEnrolled(creds.operator_id));
    }
    Ok(OperatorSession {
        operator_id: creds.operator_id,
        role: creds.role,
        clearance: creds.clearance,
    })
}
