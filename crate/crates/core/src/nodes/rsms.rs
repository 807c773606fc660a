//! The root security management system: certifies principals and packages
//! updates as one sealed container with a header per recipient.

use crate::container::{
    build_inner_archive, issue_header, seal_container, ArchiveEntry, ContainerError, EntryType,
    FullContainer, RecipientHeader, Signer,
};
use crate::cryptosuite::arith::derive_seed;
use crate::cryptosuite::{AlgorithmSuite, KeystreamError, SuiteRegistry, SymmetricKey};
use crate::identity::{
    issue_certificate, CapabilityList, Certificate, Identity, IdentityError, SubjectInfo,
    TrustStore,
};

use super::{ClassificationLabel, NodeError};

/// Attempts at drawing a transport key before giving up. Retries only
/// happen at toy moduli, where a seed can share a factor with `n`.
const TRANSPORT_KEY_ATTEMPTS: u32 = 16;

#[derive(Debug, Clone)]
pub struct RsmsState {
    pub identity: Identity,
    pub cert: Certificate,
    pub caps: CapabilityList,
    pub trust: TrustStore,
    pub registry: SuiteRegistry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageUpdate {
    pub container: FullContainer,
    pub headers: Vec<RecipientHeader>,
}

impl RsmsState {
    /// Self-certifies `identity` and anchors the trust store on it.
    pub fn new(
        mut identity: Identity,
        caps: CapabilityList,
        registry: SuiteRegistry,
        valid_from: u64,
        valid_to: u64,
    ) -> Result<Self, NodeError> {
        let cert = identity.self_signed(&caps, valid_from, valid_to)?;
        let trust =
            TrustStore::with_root(cert.clone()).map_err(|e| NodeError::Topology(e.to_string()))?;
        Ok(RsmsState {
            identity,
            cert,
            caps,
            trust,
            registry,
        })
    }

    pub fn id(&self) -> &str {
        &self.identity.id
    }

    pub fn certify(
        &mut self,
        subject: &SubjectInfo,
        valid_from: u64,
        valid_to: u64,
    ) -> Result<Certificate, IdentityError> {
        issue_certificate(
            &self.caps,
            &mut self.identity,
            subject,
            valid_from,
            valid_to,
        )
    }

    fn require(&self, operation: &str) -> Result<(), NodeError> {
        let role = self.identity.role.name();
        if self.caps.allows(role, operation) {
            Ok(())
        } else {
            Err(NodeError::CapabilityDenied(
                role.to_string(),
                operation.to_string(),
            ))
        }
    }
}

/// An ALGORITHM_UPDATE entry carrying `suite`.
pub fn algorithm_update_entry(suite: &AlgorithmSuite) -> ArchiveEntry {
    ArchiveEntry::new(
        EntryType::AlgorithmUpdate,
        format!("suite-{}", suite.suite_id.0),
        ClassificationLabel::UNCLASSIFIED,
        suite.encode(),
    )
}

/// Seals `entries` once and issues a header for each recipient. Consumes
/// one signing leaf for the container and one per header.
///
/// The container uses the suite of the recipients' encapsulation keys, so
/// a staged or newly active suite does not strand older certificates.
pub fn rsms_package_update(
    rsms: &mut RsmsState,
    entries: &[ArchiveEntry],
    recipients: &[Certificate],
    now: u64,
    seed: [u8; 32],
) -> Result<PackageUpdate, NodeError> {
    rsms.require("package_update")?;
    let archive = build_inner_archive(entries).map_err(ContainerError::from)?;
    let suite_id = match recipients.first() {
        Some(c) => c.encaps_public.suite_id,
        None => rsms.registry.active_id(),
    };
    let suite = rsms
        .registry
        .lookup(suite_id)
        .map_err(|_| NodeError::UnknownSuite(suite_id))?
        .clone();
    let id = rsms.identity.id.clone();
    let mut attempt = 0;
    let (container, key) = loop {
        let key = SymmetricKey::new(
            derive_seed(&seed, &format!("rsms/transport/{attempt}")),
            suite.suite_id,
        );
        match seal_container(
            &archive,
            Signer::new(&id, &mut rsms.identity.signer),
            &suite,
            &key,
        ) {
            Ok(c) => break (c, key),
            Err(ContainerError::Keystream(KeystreamError::Rekey))
                if attempt + 1 < TRANSPORT_KEY_ATTEMPTS =>
            {
                attempt += 1
            }
            Err(e) => return Err(e.into()),
        }
    };
    let headers = recipients
        .iter()
        .enumerate()
        .map(|(i, cert)| {
            issue_header(
                &container,
                &key,
                cert,
                &rsms.trust,
                now,
                Signer::new(&id, &mut rsms.identity.signer),
                derive_seed(&seed, &format!("rsms/header/{i}")),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PackageUpdate { container, headers })
}
