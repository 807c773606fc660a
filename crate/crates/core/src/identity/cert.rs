use std::fmt;
use std::str::FromStr;

use crate::cryptosuite::arith::derive_seed;
use crate::cryptosuite::{
    cs_keygen, gmr_keygen, gmr_verify, AlgorithmSuite, EncapsKeyPair, EncapsPublicKey,
    EncapsSecretKey, GmrPublicKey, SignatureKeyPair, SuiteError,
};
use crate::nodes::ClassificationLabel;
use crate::wire::{Reader, WireError, Writer};

use super::caps::{CapabilityList, Decision};
use super::IdentityError;

pub const CERT_MAGIC: &[u8; 4] = b"CERT";
pub const CERT_FORMAT_VERSION: u16 = 1;
pub const IDENTITY_MAGIC: &[u8; 4] = b"SKEY";
pub const IDENTITY_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Role {
    Rsms = 1,
    Rnms = 2,
    Ngdm = 3,
    Kdms = 4,
    Device = 5,
    Operator = 6,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Rsms,
        Role::Rnms,
        Role::Ngdm,
        Role::Kdms,
        Role::Device,
        Role::Operator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Rsms => "RSMS",
            Role::Rnms => "RNMS",
            Role::Ngdm => "NGDM",
            Role::Kdms => "KDMS",
            Role::Device => "DEVICE",
            Role::Operator => "OPERATOR",
        }
    }

    pub fn from_u8(v: u8) -> Option<Role> {
        Role::ALL.into_iter().find(|r| *r as u8 == v)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Role::ALL
            .into_iter()
            .find(|r| r.name() == upper)
            .ok_or_else(|| format!("unknown role `{}`", s.trim()))
    }
}

/// Everything a certificate says about its subject, minus validity and
/// issuer data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectInfo {
    pub subject_id: String,
    pub role: Role,
    pub sig_public: GmrPublicKey,
    pub encaps_public: EncapsPublicKey,
    pub clearance: ClassificationLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_id: String,
    pub role: Role,
    pub sig_public: GmrPublicKey,
    pub encaps_public: EncapsPublicKey,
    pub clearance: ClassificationLabel,
    pub valid_from: u64,
    pub valid_to: u64,
    pub issuer_id: String,
    pub issuer_signature: Vec<u8>,
}

impl Certificate {
    pub fn is_self_signed(&self) -> bool {
        self.subject_id == self.issuer_id
    }

    pub fn covers(&self, now: u64) -> bool {
        self.valid_from <= now && now <= self.valid_to
    }

    /// The bytes the issuer signs: the full encoding up to and including
    /// `issuer_id`.
    pub fn tbs_bytes(&self) -> Vec<u8> {
        self.tbs_writer().into_bytes()
    }

    fn tbs_writer(&self) -> Writer {
        let mut w = Writer::with_magic(CERT_MAGIC, CERT_FORMAT_VERSION);
        let mut nested = Writer::new();
        self.sig_public.write(&mut nested);
        let sig_public = nested.into_bytes();
        let mut nested = Writer::new();
        self.encaps_public.write(&mut nested);
        let encaps_public = nested.into_bytes();
        w.bytes32(self.subject_id.as_bytes())
            .bytes32(&[self.role as u8])
            .bytes32(&sig_public)
            .bytes32(&encaps_public)
            .bytes32(&[self.clearance.to_byte()])
            .bytes32(&self.valid_from.to_be_bytes())
            .bytes32(&self.valid_to.to_be_bytes())
            .bytes32(self.issuer_id.as_bytes());
        w
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = self.tbs_writer();
        w.bytes32(&self.issuer_signature);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(CERT_MAGIC)?;
        if version != CERT_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let subject_id = utf8(r.bytes32()?, "subject_id")?;
        let role = match r.bytes32()? {
            [b] => Role::from_u8(*b).ok_or_else(|| WireError::invalid("role", "unknown role"))?,
            _ => return Err(WireError::invalid("role", "expected 1 byte")),
        };
        let sig_public = GmrPublicKey::decode(r.bytes32()?)?;
        let encaps_public = EncapsPublicKey::decode(r.bytes32()?)?;
        let clearance = match r.bytes32()? {
            [b] => ClassificationLabel::from_byte(*b)
                .ok_or_else(|| WireError::invalid("clearance", "unknown label"))?,
            _ => return Err(WireError::invalid("clearance", "expected 1 byte")),
        };
        let valid_from = tick(r.bytes32()?, "valid_from")?;
        let valid_to = tick(r.bytes32()?, "valid_to")?;
        let issuer_id = utf8(r.bytes32()?, "issuer_id")?;
        let issuer_signature = r.bytes32()?.to_vec();
        r.finish()?;
        Ok(Certificate {
            subject_id,
            role,
            sig_public,
            encaps_public,
            clearance,
            valid_from,
            valid_to,
            issuer_id,
            issuer_signature,
        })
    }

    pub fn subject_info(&self) -> SubjectInfo {
        SubjectInfo {
            subject_id: self.subject_id.clone(),
            role: self.role,
            sig_public: self.sig_public.clone(),
            encaps_public: self.encaps_public.clone(),
            clearance: self.clearance,
        }
    }

    /// Checks the issuer signature against `issuer_key` only.
    pub fn signature_valid_under(&self, issuer_key: &GmrPublicKey) -> bool {
        gmr_verify(issuer_key, &self.tbs_bytes(), &self.issuer_signature)
    }
}

fn utf8(b: &[u8], field: &'static str) -> Result<String, WireError> {
    String::from_utf8(b.to_vec()).map_err(|_| WireError::invalid(field, "not UTF-8"))
}

fn tick(b: &[u8], field: &'static str) -> Result<u64, WireError> {
    let arr: [u8; 8] = b
        .try_into()
        .map_err(|_| WireError::invalid(field, "expected 8 bytes"))?;
    Ok(u64::from_be_bytes(arr))
}

/// A principal's full key material: signer, encapsulation pair, role and
/// clearance.
#[derive(Debug, Clone)]
pub struct Identity {
    pub id: String,
    pub role: Role,
    pub clearance: ClassificationLabel,
    pub signer: SignatureKeyPair,
    pub encaps: EncapsKeyPair,
}

impl Identity {
    pub fn generate(
        id: &str,
        role: Role,
        clearance: ClassificationLabel,
        suite: &AlgorithmSuite,
        seed: [u8; 32],
    ) -> Result<Self, SuiteError> {
        let signer = gmr_keygen(suite, derive_seed(&seed, "identity/sig"))?;
        let encaps = cs_keygen(suite, derive_seed(&seed, "identity/enc"));
        Ok(Identity {
            id: id.to_string(),
            role,
            clearance,
            signer,
            encaps,
        })
    }

    pub fn subject_info(&self) -> SubjectInfo {
        SubjectInfo {
            subject_id: self.id.clone(),
            role: self.role,
            sig_public: self.signer.public().clone(),
            encaps_public: self.encaps.public.clone(),
            clearance: self.clearance,
        }
    }

    /// Private key file: id, role, clearance, signer state and the
    /// encapsulation secret.
    pub fn encode_secret(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(IDENTITY_MAGIC, IDENTITY_FORMAT_VERSION);
        w.str16(&self.id)
            .u8(self.role as u8)
            .u8(self.clearance.to_byte())
            .bytes32(&self.signer.encode_secret());
        self.encaps.secret.write(&mut w);
        w.into_bytes()
    }

    pub fn decode_secret(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(IDENTITY_MAGIC)?;
        if version != IDENTITY_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let id = r.str16("id")?;
        let role =
            Role::from_u8(r.u8()?).ok_or_else(|| WireError::invalid("role", "unknown role"))?;
        let clearance = ClassificationLabel::from_byte(r.u8()?)
            .ok_or_else(|| WireError::invalid("clearance", "unknown label"))?;
        let signer = SignatureKeyPair::decode_secret(r.bytes32()?)?;
        let secret = EncapsSecretKey::read(&mut r)?;
        r.finish()?;
        Ok(Identity {
            id,
            role,
            clearance,
            signer,
            encaps: EncapsKeyPair::from_secret(secret),
        })
    }

    /// Self-signed root certificate. Only an RSMS may hold one.
    pub fn self_signed(
        &mut self,
        caps: &CapabilityList,
        valid_from: u64,
        valid_to: u64,
    ) -> Result<Certificate, IdentityError> {
        let subject = self.subject_info();
        issue_certificate(caps, self, &subject, valid_from, valid_to)
    }
}

/// Signs `subject` with the issuer's tree signer, consuming one leaf.
pub fn issue_certificate(
    caps: &CapabilityList,
    issuer: &mut Identity,
    subject: &SubjectInfo,
    valid_from: u64,
    valid_to: u64,
) -> Result<Certificate, IdentityError> {
    if caps.check(issuer.role.name(), "issue_certificate") == Decision::Deny {
        return Err(IdentityError::CapabilityDenied {
            role: issuer.role.name().to_string(),
            operation: "issue_certificate".into(),
        });
    }
    if valid_from >= valid_to {
        return Err(IdentityError::InvertedWindow {
            from: valid_from,
            to: valid_to,
        });
    }
    if subject.subject_id == issuer.id && subject.role != Role::Rsms {
        return Err(IdentityError::SelfSignedNonRoot(subject.subject_id.clone()));
    }
    let mut cert = Certificate {
        subject_id: subject.subject_id.clone(),
        role: subject.role,
        sig_public: subject.sig_public.clone(),
        encaps_public: subject.encaps_public.clone(),
        clearance: subject.clearance,
        valid_from,
        valid_to,
        issuer_id: issuer.id.clone(),
        issuer_signature: Vec::new(),
    };
    cert.issuer_signature = issuer.signer.sign_bytes(&cert.tbs_bytes())?;
    Ok(cert)
}
