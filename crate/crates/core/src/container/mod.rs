//! Exchange container: one signed ciphertext shared by every recipient,
//! a small signed key header per recipient, and the plaintext archive
//! inside.

mod archive;
mod envelope;

use thiserror::Error;

use crate::cryptosuite::{DecapError, KeystreamError, SignError, SuiteId};
use crate::identity::RejectReason;
use crate::wire::WireError;

pub use archive::{
    build_inner_archive, parse_inner_archive, ArchiveEntry, ArchiveError, EntryType,
    ARCHIVE_FORMAT_VERSION, ARCHIVE_MAGIC,
};
pub use envelope::{
    container_id_for, inspect_header, inspect_outer, issue_header, open_container,
    open_container_bytes, seal_container, unwrap_transport_key, ContainerId, FullContainer,
    HeaderInfo, OpenContext, Opened, OuterInfo, RecipientHeader, Signer, SignerCheck,
    CONTAINER_FORMAT_VERSION, CONTAINER_ID_LEN, FULL_MAGIC, HEADER_MAGIC,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContainerError {
    #[error("malformed encoding: {0}")]
    Parse(WireError),
    #[error("routing: {0}")]
    Routing(String),
    #[error("suite of container, header and keys disagree")]
    SuiteMismatch,
    #[error("{0} is not registered")]
    UnknownSuite(SuiteId),
    #[error("header signature invalid")]
    HeaderSignature,
    #[error("container signature invalid")]
    ContainerSignature,
    #[error("container id does not match payload")]
    PayloadDigest,
    #[error("no certificate available for signer {0}")]
    UnknownSigner(String),
    #[error("signer certificate rejected: {0}")]
    SignerCertificate(RejectReason),
    #[error("recipient certificate rejected: {0}")]
    RecipientCertificate(RejectReason),
    #[error("key decapsulation failed: {0}")]
    Decapsulation(#[from] DecapError),
    #[error(transparent)]
    Keystream(#[from] KeystreamError),
    #[error("archive: {0}")]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Sign(#[from] SignError),
}

impl ContainerError {
    /// Short, stable, hyphenated reason for command-line output.
    pub fn reason(&self) -> &'static str {
        match self {
            ContainerError::Parse(_) => "malformed",
            ContainerError::Routing(_) => "routing",
            ContainerError::SuiteMismatch => "suite-mismatch",
            ContainerError::UnknownSuite(_) => "unknown-suite",
            ContainerError::HeaderSignature => "header-signature-invalid",
            ContainerError::ContainerSignature | ContainerError::PayloadDigest => {
                "signature-invalid"
            }
            ContainerError::UnknownSigner(_) => "unknown-signer",
            ContainerError::SignerCertificate(_) => "signer-certificate-rejected",
            ContainerError::RecipientCertificate(_) => "recipient-certificate-rejected",
            ContainerError::Decapsulation(_) => "decapsulation-failed",
            ContainerError::Keystream(_) => "rekey-required",
            ContainerError::Archive(ArchiveError::Nesting { .. }) => "nested-container",
            ContainerError::Archive(_) => "archive-invalid",
            ContainerError::Sign(_) => "signer-exhausted",
        }
    }
}

impl From<WireError> for ContainerError {
    fn from(e: WireError) -> Self {
        ContainerError::Parse(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptosuite::{generate_suite, AlgorithmSuite, SuiteRegistry, SymmetricKey};
    use crate::identity::{
        issue_certificate, CapabilityList, Certificate, Identity, Role, TrustStore,
    };
    use crate::nodes::ClassificationLabel;

    struct World {
        suite: AlgorithmSuite,
        registry: SuiteRegistry,
        trust: TrustStore,
        rsms: Identity,
        rsms_cert: Certificate,
        dev: Identity,
        dev_cert: Certificate,
        other: Identity,
    }

    fn world() -> World {
        let caps = CapabilityList::default_policy();
        let suite = generate_suite(32, [3; 32]).unwrap();
        let mut rsms = Identity::generate(
            "rsms",
            Role::Rsms,
            ClassificationLabel::NATO_SECRET,
            &suite,
            [1; 32],
        )
        .unwrap();
        let rsms_cert = rsms.self_signed(&caps, 0, 10_000).unwrap();
        let dev = Identity::generate(
            "d1",
            Role::Device,
            ClassificationLabel::NATO_SECRET,
            &suite,
            [2; 32],
        )
        .unwrap();
        let dev_cert = issue_certificate(&caps, &mut rsms, &dev.subject_info(), 0, 10_000).unwrap();
        let other = Identity::generate(
            "d2",
            Role::Device,
            ClassificationLabel::NATO_SECRET,
            &suite,
            [4; 32],
        )
        .unwrap();
        World {
            registry: SuiteRegistry::new(suite.clone()),
            trust: TrustStore::with_root(rsms_cert.clone()).unwrap(),
            suite,
            rsms,
            rsms_cert,
            dev,
            dev_cert,
            other,
        }
    }

    fn entries() -> Vec<ArchiveEntry> {
        vec![
            ArchiveEntry::new(
                EntryType::Waveform,
                "wf.bin",
                ClassificationLabel::UNCLASSIFIED,
                b"waveform bytes for the radio".to_vec(),
            ),
            ArchiveEntry::new(
                EntryType::KeyMaterial,
                "net-7",
                ClassificationLabel::NATO_SECRET,
                vec![0x42; 32],
            ),
        ]
    }

    fn key(w: &World) -> SymmetricKey {
        SymmetricKey::new([0x5c; 32], w.suite.suite_id)
    }

    fn ctx(w: &World) -> OpenContext<'_> {
        OpenContext {
            trust: &w.trust,
            suites: &w.registry,
            now: 5,
        }
    }

    fn sealed(w: &mut World, es: &[ArchiveEntry]) -> (FullContainer, RecipientHeader) {
        let archive = build_inner_archive(es).unwrap();
        let k = key(w);
        let c = seal_container(
            &archive,
            Signer::new("rsms", &mut w.rsms.signer),
            &w.suite,
            &k,
        )
        .unwrap();
        let h = issue_header(
            &c,
            &k,
            &w.dev_cert,
            &w.trust,
            5,
            Signer::new("rsms", &mut w.rsms.signer),
            [9; 32],
        )
        .unwrap();
        (c, h)
    }

    #[test]
    fn happy_path_cached() {
        let mut w = world();
        let (c, h) = sealed(&mut w, &entries());
        let opened = open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)).unwrap();
        assert_eq!(opened.entries, entries());
        assert_eq!(opened.signer_check, SignerCheck::Cached);
        let again =
            open_container_bytes(&c.encode(), &h.encode(), &w.dev.encaps.secret, ctx(&w)).unwrap();
        assert_eq!(again, opened);
    }

    #[test]
    fn embedded_certificate_path() {
        let mut w = world();
        let caps = CapabilityList::default_policy();
        // A KDMS signs the container; devices only have the RSMS root.
        let mut kdms = Identity::generate(
            "kdms",
            Role::Kdms,
            ClassificationLabel::NATO_SECRET,
            &w.suite,
            [6; 32],
        )
        .unwrap();
        let kdms_cert =
            issue_certificate(&caps, &mut w.rsms, &kdms.subject_info(), 0, 100).unwrap();
        let mut es = entries();
        es.push(ArchiveEntry::new(
            EntryType::Certificate,
            "signer.cert",
            ClassificationLabel::UNCLASSIFIED,
            kdms_cert.encode(),
        ));
        let archive = build_inner_archive(&es).unwrap();
        let k = key(&w);
        let c = seal_container(
            &archive,
            Signer::new("kdms", &mut kdms.signer),
            &w.suite,
            &k,
        )
        .unwrap();
        let h = issue_header(
            &c,
            &k,
            &w.dev_cert,
            &w.trust,
            5,
            Signer::new("rsms", &mut w.rsms.signer),
            [1; 32],
        )
        .unwrap();
        let opened = open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)).unwrap();
        assert_eq!(opened.signer_check, SignerCheck::Embedded);
        assert_eq!(opened.entries, es);

        // Same payload, signature from a different leaf over other bytes.
        let mut forged = c.clone();
        forged.signature = kdms.signer.sign_bytes(b"something else").unwrap();
        assert_eq!(
            open_container(&forged, &h, &w.dev.encaps.secret, ctx(&w)),
            Err(ContainerError::ContainerSignature)
        );

        // Without the embedded certificate there is nothing to check against.
        let archive = build_inner_archive(&entries()).unwrap();
        let c = seal_container(
            &archive,
            Signer::new("kdms", &mut kdms.signer),
            &w.suite,
            &k,
        )
        .unwrap();
        let h = issue_header(
            &c,
            &k,
            &w.dev_cert,
            &w.trust,
            5,
            Signer::new("rsms", &mut w.rsms.signer),
            [1; 32],
        )
        .unwrap();
        assert_eq!(
            open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)),
            Err(ContainerError::UnknownSigner("kdms".into()))
        );
    }

    #[test]
    fn tampered_payload_rejected_before_decryption() {
        let mut w = world();
        let (mut c, h) = sealed(&mut w, &entries());
        c.payload[3] ^= 1;
        let err = open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)).unwrap_err();
        assert_eq!(err, ContainerError::ContainerSignature);
        assert_eq!(err.reason(), "signature-invalid");
    }

    #[test]
    fn wrong_recipient_key() {
        let mut w = world();
        let (c, h) = sealed(&mut w, &entries());
        assert!(matches!(
            open_container(&c, &h, &w.other.encaps.secret, ctx(&w)),
            Err(ContainerError::Decapsulation(_))
        ));
    }

    #[test]
    fn frozen_signer_reproduces_ciphertext() {
        let mut w = world();
        let archive = build_inner_archive(&entries()).unwrap();
        let k = key(&w);
        let mut frozen = w.rsms.signer.clone();
        let a = seal_container(
            &archive,
            Signer::new("rsms", &mut w.rsms.signer),
            &w.suite,
            &k,
        )
        .unwrap();
        let b = seal_container(&archive, Signer::new("rsms", &mut frozen), &w.suite, &k).unwrap();
        assert_eq!(a, b);
        let c = seal_container(
            &archive,
            Signer::new("rsms", &mut w.rsms.signer),
            &w.suite,
            &k,
        )
        .unwrap();
        assert_eq!(a.payload, c.payload);
        assert_eq!(a.container_id, c.container_id);
        assert_ne!(a.signature, c.signature);
    }

    #[test]
    fn routing_and_suite_checks() {
        let mut w = world();
        let (c, mut h) = sealed(&mut w, &entries());
        h.container_id[0] ^= 1;
        assert!(matches!(
            open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)),
            Err(ContainerError::Routing(_))
        ));
        let wrong = SymmetricKey::new([1; 32], crate::cryptosuite::SuiteId(9));
        let archive = build_inner_archive(&entries()).unwrap();
        assert_eq!(
            seal_container(
                &archive,
                Signer::new("rsms", &mut w.rsms.signer),
                &w.suite,
                &wrong
            ),
            Err(ContainerError::SuiteMismatch)
        );
    }

    #[test]
    fn expired_recipient_certificate() {
        let mut w = world();
        let (c, _) = sealed(&mut w, &entries());
        let k = key(&w);
        assert!(matches!(
            issue_header(
                &c,
                &k,
                &w.dev_cert,
                &w.trust,
                20_000,
                Signer::new("rsms", &mut w.rsms.signer),
                [0; 32]
            ),
            Err(ContainerError::RecipientCertificate(_))
        ));
    }

    #[test]
    fn inspect_needs_no_keys() {
        let mut w = world();
        let (c, h) = sealed(&mut w, &entries());
        let bytes = c.encode();
        let info = inspect_outer(&bytes).unwrap();
        assert_eq!(info.signer_id, "rsms");
        assert_eq!(info.payload_len, c.payload.len() as u64);
        assert!(inspect_outer(&bytes[..10]).is_err());
        assert_eq!(inspect_header(&h.encode()).unwrap().recipient_id, "d1");
        let _ = &w.rsms_cert;
    }

    #[test]
    fn nesting_rejected_at_open() {
        let mut w = world();
        let (inner, _) = sealed(&mut w, &entries());
        // Forge an archive by hand, bypassing the builder's check.
        let mut forged = crate::wire::Writer::with_magic(ARCHIVE_MAGIC, ARCHIVE_FORMAT_VERSION);
        forged
            .u16(1)
            .u8(EntryType::Waveform as u8)
            .str16("inner")
            .u8(0)
            .bytes64(&inner.encode());
        let forged = forged.into_bytes();
        let k = key(&w);
        let payload = crate::cryptosuite::apply_keystream(&k, &w.suite, &forged).unwrap();
        let mut c = FullContainer {
            container_id: container_id_for(&payload),
            suite_id: w.suite.suite_id,
            payload,
            signer_id: "rsms".into(),
            signature: Vec::new(),
        };
        c.signature = w.rsms.signer.sign_bytes(&c.signed_bytes()).unwrap();
        let h = issue_header(
            &c,
            &k,
            &w.dev_cert,
            &w.trust,
            5,
            Signer::new("rsms", &mut w.rsms.signer),
            [2; 32],
        )
        .unwrap();
        let err = open_container(&c, &h, &w.dev.encaps.secret, ctx(&w)).unwrap_err();
        assert_eq!(
            err,
            ContainerError::Archive(ArchiveError::Nesting { index: 0 })
        );
        assert_eq!(err.reason(), "nested-container");
    }
}
