use crate::cryptosuite::{
    apply_keystream, cs_encapsulate, gmr_verify, AlgorithmSuite, CsCiphertext, EncapsSecretKey,
    GmrPublicKey, HashId, SignatureKeyPair, SuiteId, SuiteRegistry, SymmetricKey,
    SYMMETRIC_KEY_LEN,
};
use crate::identity::{verify_certificate, Certificate, TrustStore, Verdict};
use crate::wire::{Reader, WireError, Writer};

use super::archive::{parse_inner_archive, ArchiveEntry, EntryType};
use super::ContainerError;

pub const FULL_MAGIC: &[u8; 4] = b"SDRC";
pub const HEADER_MAGIC: &[u8; 4] = b"SDRH";
pub const CONTAINER_FORMAT_VERSION: u16 = 1;
pub const CONTAINER_ID_LEN: usize = 16;

pub type ContainerId = [u8; CONTAINER_ID_LEN];

/// First 16 bytes of SHA-256 over the payload ciphertext.
pub fn container_id_for(payload: &[u8]) -> ContainerId {
    let d = HashId::Sha256.digest(&[payload]);
    d[..CONTAINER_ID_LEN]
        .try_into()
        .expect("digest is 32 bytes")
}

/// The shared, signed ciphertext. One per package regardless of how many
/// recipients it has.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullContainer {
    pub container_id: ContainerId,
    pub suite_id: SuiteId,
    pub payload: Vec<u8>,
    pub signer_id: String,
    pub signature: Vec<u8>,
}

impl FullContainer {
    /// Magic through payload: the span covered by the signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        self.signed_writer().into_bytes()
    }

    fn signed_writer(&self) -> Writer {
        let mut w = Writer::with_magic(FULL_MAGIC, CONTAINER_FORMAT_VERSION);
        w.raw(&self.container_id)
            .u16(self.suite_id.0)
            .bytes64(&self.payload);
        w
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = self.signed_writer();
        w.str16(&self.signer_id).bytes32(&self.signature);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(FULL_MAGIC)?;
        if version != CONTAINER_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let container_id = r
            .take(CONTAINER_ID_LEN)?
            .try_into()
            .expect("length checked");
        let suite_id = SuiteId(r.u16()?);
        let payload = r.bytes64()?.to_vec();
        let signer_id = r.str16("signer_id")?;
        let signature = r.bytes32()?.to_vec();
        r.finish()?;
        Ok(FullContainer {
            container_id,
            suite_id,
            payload,
            signer_id,
            signature,
        })
    }

    pub fn verify_signature(&self, signer: &GmrPublicKey) -> bool {
        gmr_verify(signer, &self.signed_bytes(), &self.signature)
    }

    pub fn id_matches_payload(&self) -> bool {
        container_id_for(&self.payload) == self.container_id
    }
}

/// Per-recipient key header for a [`FullContainer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipientHeader {
    pub container_id: ContainerId,
    pub recipient_id: String,
    pub suite_id: SuiteId,
    pub wrapped_key: Vec<u8>,
    pub issuer_id: String,
    pub issuer_signature: Vec<u8>,
}

impl RecipientHeader {
    pub fn signed_bytes(&self) -> Vec<u8> {
        self.signed_writer().into_bytes()
    }

    fn signed_writer(&self) -> Writer {
        let mut w = Writer::with_magic(HEADER_MAGIC, CONTAINER_FORMAT_VERSION);
        w.raw(&self.container_id)
            .str16(&self.recipient_id)
            .u16(self.suite_id.0)
            .bytes32(&self.wrapped_key)
            .str16(&self.issuer_id);
        w
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = self.signed_writer();
        w.bytes32(&self.issuer_signature);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(HEADER_MAGIC)?;
        if version != CONTAINER_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let container_id = r
            .take(CONTAINER_ID_LEN)?
            .try_into()
            .expect("length checked");
        let recipient_id = r.str16("recipient_id")?;
        let suite_id = SuiteId(r.u16()?);
        let wrapped_key = r.bytes32()?.to_vec();
        let issuer_id = r.str16("issuer_id")?;
        let issuer_signature = r.bytes32()?.to_vec();
        r.finish()?;
        Ok(RecipientHeader {
            container_id,
            recipient_id,
            suite_id,
            wrapped_key,
            issuer_id,
            issuer_signature,
        })
    }
}

/// A signer together with the identifier recipients will look it up by.
pub struct Signer<'a> {
    pub id: &'a str,
    pub keys: &'a mut SignatureKeyPair,
}

impl<'a> Signer<'a> {
    pub fn new(id: &'a str, keys: &'a mut SignatureKeyPair) -> Self {
        Signer { id, keys }
    }
}

/// Encrypts the archive under `transport_key` and signs the ciphertext.
pub fn seal_container(
    archive: &[u8],
    signer: Signer<'_>,
    suite: &AlgorithmSuite,
    transport_key: &SymmetricKey,
) -> Result<FullContainer, ContainerError> {
    parse_inner_archive(archive)?;
    if transport_key.suite_id() != suite.suite_id {
        return Err(ContainerError::SuiteMismatch);
    }
    let payload = apply_keystream(transport_key, suite, archive)?;
    let mut c = FullContainer {
        container_id: container_id_for(&payload),
        suite_id: suite.suite_id,
        payload,
        signer_id: signer.id.to_string(),
        signature: Vec::new(),
    };
    c.signature = signer.keys.sign_bytes(&c.signed_bytes())?;
    Ok(c)
}

fn wrap_mask(hash: HashId, shared: &SymmetricKey, ct: &[u8]) -> [u8; 32] {
    hash.digest(&[b"container/wrap", shared.as_bytes(), ct])
}

/// Wraps `transport_key` for the certificate's subject and signs the header.
///
/// `wrapped_key` is the encapsulation ciphertext followed by the transport
/// key masked with a hash of the encapsulated secret.
#[allow(clippy::too_many_arguments)]
pub fn issue_header(
    container: &FullContainer,
    transport_key: &SymmetricKey,
    recipient_cert: &Certificate,
    trust: &TrustStore,
    now: u64,
    issuer: Signer<'_>,
    randomness: [u8; 32],
) -> Result<RecipientHeader, ContainerError> {
    if let Verdict::Reject(r) = verify_certificate(recipient_cert, trust, now) {
        return Err(ContainerError::RecipientCertificate(r));
    }
    let pk = &recipient_cert.encaps_public;
    if pk.suite_id != container.suite_id || transport_key.suite_id() != container.suite_id {
        return Err(ContainerError::SuiteMismatch);
    }
    let (ct, shared) = cs_encapsulate(pk, randomness);
    let mut wrapped = ct.encode(&pk.group);
    let mask = wrap_mask(pk.group.hash, &shared, &wrapped);
    wrapped.extend(
        transport_key
            .as_bytes()
            .iter()
            .zip(mask)
            .map(|(k, m)| k ^ m),
    );
    let mut h = RecipientHeader {
        container_id: container.container_id,
        recipient_id: recipient_cert.subject_id.clone(),
        suite_id: container.suite_id,
        wrapped_key: wrapped,
        issuer_id: issuer.id.to_string(),
        issuer_signature: Vec::new(),
    };
    h.issuer_signature = issuer.keys.sign_bytes(&h.signed_bytes())?;
    Ok(h)
}

/// Recovers the transport key from a header.
pub fn unwrap_transport_key(
    header: &RecipientHeader,
    recipient: &EncapsSecretKey,
) -> Result<SymmetricKey, ContainerError> {
    let group = &recipient.public.group;
    let ct_len = CsCiphertext::encoded_len(group);
    if header.wrapped_key.len() != ct_len + SYMMETRIC_KEY_LEN {
        return Err(ContainerError::Decapsulation(
            crate::cryptosuite::DecapError::Malformed,
        ));
    }
    let (ct_bytes, masked) = header.wrapped_key.split_at(ct_len);
    let ct = CsCiphertext::decode(ct_bytes, group)?;
    let shared = recipient.decapsulate_parsed(&ct)?;
    let mask = wrap_mask(group.hash, &shared, ct_bytes);
    let mut key = [0u8; SYMMETRIC_KEY_LEN];
    for (k, (c, m)) in key.iter_mut().zip(masked.iter().zip(mask)) {
        *k = c ^ m;
    }
    Ok(SymmetricKey::new(key, header.suite_id))
}

/// Inputs an opener needs besides the container, header and its own key.
#[derive(Clone, Copy)]
pub struct OpenContext<'a> {
    pub trust: &'a TrustStore,
    pub suites: &'a SuiteRegistry,
    pub now: u64,
}

/// How the container signature was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignerCheck {
    /// Against a stored root or cached certificate, before decryption.
    Cached,
    /// Against a certificate carried inside the archive, after decryption.
    Embedded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened {
    pub entries: Vec<ArchiveEntry>,
    pub signer_check: SignerCheck,
}

/// Opens a container for one recipient. Either every check passes and all
/// entries are returned, or nothing is.
pub fn open_container(
    container: &FullContainer,
    header: &RecipientHeader,
    recipient: &EncapsSecretKey,
    ctx: OpenContext<'_>,
) -> Result<Opened, ContainerError> {
    if header.container_id != container.container_id {
        return Err(ContainerError::Routing(
            "header names a different container".into(),
        ));
    }
    if header.suite_id != container.suite_id {
        return Err(ContainerError::SuiteMismatch);
    }
    let issuer = ctx
        .trust
        .lookup(&header.issuer_id, ctx.now)
        .ok_or(ContainerError::HeaderSignature)?;
    if !gmr_verify(
        &issuer.sig_public,
        &header.signed_bytes(),
        &header.issuer_signature,
    ) {
        return Err(ContainerError::HeaderSignature);
    }
    let suite = ctx
        .suites
        .lookup(container.suite_id)
        .map_err(|_| ContainerError::UnknownSuite(container.suite_id))?;

    let cached = ctx.trust.lookup(&container.signer_id, ctx.now);
    if let Some(cert) = cached {
        if !container.verify_signature(&cert.sig_public) {
            return Err(ContainerError::ContainerSignature);
        }
    }
    if !container.id_matches_payload() {
        return Err(ContainerError::PayloadDigest);
    }

    let transport_key = unwrap_transport_key(header, recipient)?;
    let archive = apply_keystream(&transport_key, suite, &container.payload)?;
    let entries = parse_inner_archive(&archive)?;

    if cached.is_some() {
        return Ok(Opened {
            entries,
            signer_check: SignerCheck::Cached,
        });
    }
    let cert_bytes = entries
        .iter()
        .find(|e| e.entry_type == EntryType::Certificate)
        .map(|e| &e.content)
        .ok_or_else(|| ContainerError::UnknownSigner(container.signer_id.clone()))?;
    let cert = Certificate::decode(cert_bytes)
        .map_err(|_| ContainerError::UnknownSigner(container.signer_id.clone()))?;
    if cert.subject_id != container.signer_id {
        return Err(ContainerError::UnknownSigner(container.signer_id.clone()));
    }
    if let Verdict::Reject(r) = verify_certificate(&cert, ctx.trust, ctx.now) {
        return Err(ContainerError::SignerCertificate(r));
    }
    if !container.verify_signature(&cert.sig_public) {
        return Err(ContainerError::ContainerSignature);
    }
    Ok(Opened {
        entries,
        signer_check: SignerCheck::Embedded,
    })
}

/// Decodes both artifacts and opens them.
pub fn open_container_bytes(
    container: &[u8],
    header: &[u8],
    recipient: &EncapsSecretKey,
    ctx: OpenContext<'_>,
) -> Result<Opened, ContainerError> {
    let c = FullContainer::decode(container).map_err(ContainerError::Parse)?;
    let h = RecipientHeader::decode(header).map_err(ContainerError::Parse)?;
    open_container(&c, &h, recipient, ctx)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuterInfo {
    pub container_id: ContainerId,
    pub suite_id: SuiteId,
    pub signer_id: String,
    pub payload_len: u64,
}

/// Container metadata, read without any key material.
pub fn inspect_outer(bytes: &[u8]) -> Result<OuterInfo, WireError> {
    let c = FullContainer::decode(bytes)?;
    Ok(OuterInfo {
        container_id: c.container_id,
        suite_id: c.suite_id,
        signer_id: c.signer_id,
        payload_len: c.payload.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderInfo {
    pub container_id: ContainerId,
    pub recipient_id: String,
    pub suite_id: SuiteId,
    pub issuer_id: String,
}

pub fn inspect_header(bytes: &[u8]) -> Result<HeaderInfo, WireError> {
    let h = RecipientHeader::decode(bytes)?;
    Ok(HeaderInfo {
        container_id: h.container_id,
        recipient_id: h.recipient_id,
        suite_id: h.suite_id,
        issuer_id: h.issuer_id,
    })
}
