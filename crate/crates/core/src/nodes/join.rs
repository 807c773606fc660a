//! Late net entry over channel `y`: request, session establishment, and the
//! sealed net-key transfer.

use thiserror::Error;

use crate::cryptosuite::arith::derive_seed;
use crate::cryptosuite::{
    apply_keystream, cs_encapsulate, gmr_verify, CsCiphertext, HashId, SignError, SymmetricKey,
};
use crate::identity::{verify_certificate, Certificate, RejectReason, Role, Verdict};
use crate::lifecycle::{KeyKind, KeyRecord, KeyState};
use crate::wire::{Reader, WireError, Writer};

use super::device::DeviceState;
use super::message::{Channel, Message, MsgType, SealedTransfer};
use super::{ClassificationLabel, NodeError};

/// Compartment that receives the net key.
pub const NET_CHANNEL: &str = "x";
/// Compartment that carries the join transcript and its session key.
pub const JOIN_CHANNEL: &str = "y";

const NET_KEY_ROLE: &str = "net";
const SESSION_ROLE: &str = "join-session";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JoinError {
    #[error("channel y is busy; retry later")]
    Busy,
    #[error("peer certificate rejected: {0}")]
    CertRejected(RejectReason),
    #[error("peer is not a device")]
    NotADevice,
    #[error("role {0} may not join nets")]
    NotPermitted(Role),
    #[error("certificate subject does not match the sender")]
    SenderMismatch,
    #[error("transcript signature does not verify")]
    TranscriptSignature,
    #[error("no active net key for {0}")]
    NoNetKey(String),
    #[error("joiner clearance does not cover the net key")]
    Clearance,
    #[error("session key could not be recovered")]
    Decapsulation,
    #[error("net-key transfer failed authentication")]
    Tag,
    #[error("malformed {0}")]
    Malformed(&'static str),
    #[error("no join in progress with {0}")]
    Unexpected(String),
    #[error("signing failed: {0}")]
    Sign(#[from] SignError),
}

impl JoinError {
    /// Retrying the same join later can succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, JoinError::Busy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct PendingJoin {
    net_id: String,
    lead_id: String,
    request: Vec<u8>,
    th2: Option<[u8; 32]>,
    session_key: Option<String>,
}

/// Messages exchanged by a completed join, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinTranscript {
    pub messages: Vec<Message>,
    pub key_id: String,
}

fn hash_of(cert: &Certificate) -> HashId {
    cert.encaps_public.group.hash
}

fn session_key_id(joiner: &str, request: &[u8], hash: HashId) -> String {
    let d = hash.digest(&[b"join/session-id", request]);
    let tail: String = d[..4].iter().map(|b| format!("{b:02x}")).collect();
    format!("join/{joiner}/{tail}")
}

fn malformed(what: &'static str) -> impl Fn(WireError) -> JoinError {
    move |_| JoinError::Malformed(what)
}

struct Request {
    net_id: String,
    lead_id: String,
    cert: Vec<u8>,
    nonce: [u8; 32],
    signature: Vec<u8>,
}

impl Request {
    fn transcript(&self, hash: HashId) -> [u8; 32] {
        hash.digest(&[
            b"join/t1",
            self.net_id.as_bytes(),
            self.lead_id.as_bytes(),
            &self.cert,
            &self.nonce,
        ])
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.str16(&self.net_id)
            .str16(&self.lead_id)
            .bytes32(&self.cert)
            .raw(&self.nonce)
            .bytes32(&self.signature);
        w.into_bytes()
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let req = Request {
            net_id: r.str16("net_id")?,
            lead_id: r.str16("lead_id")?,
            cert: r.bytes32()?.to_vec(),
            nonce: r.take(32)?.try_into().expect("32 bytes"),
            signature: r.bytes32()?.to_vec(),
        };
        r.finish()?;
        Ok(req)
    }
}

fn th2(hash: HashId, request: &[u8], lead_cert: &[u8], ct: &[u8]) -> [u8; 32] {
    hash.digest(&[b"join/t2", request, lead_cert, ct])
}

fn transfer_keys(hash: HashId, session: &[u8], th2: &[u8; 32]) -> ([u8; 32], [u8; 32]) {
    (
        hash.digest(&[b"join/enc", session, th2]),
        hash.digest(&[b"join/mac", session, th2]),
    )
}

fn check_peer(
    cert: &Certificate,
    sender: &str,
    device: &DeviceState,
    now: u64,
) -> Result<(), JoinError> {
    if cert.subject_id != sender {
        return Err(JoinError::SenderMismatch);
    }
    if let Verdict::Reject(r) = verify_certificate(cert, &device.trust, now) {
        return Err(JoinError::CertRejected(r));
    }
    if cert.role != Role::Device {
        return Err(JoinError::NotADevice);
    }
    if !device.caps.allows(cert.role.name(), "net_join") {
        return Err(JoinError::NotPermitted(cert.role));
    }
    Ok(())
}

/// Step 1, joiner: occupies channel y and signs a request to `lead_id`.
pub fn join_request(
    joiner: &mut DeviceState,
    lead_id: &str,
    net_id: &str,
    nonce: [u8; 32],
) -> Result<Message, JoinError> {
    if joiner.y_busy {
        return Err(JoinError::Busy);
    }
    let mut req = Request {
        net_id: net_id.to_string(),
        lead_id: lead_id.to_string(),
        cert: joiner.cert.encode(),
        nonce,
        signature: Vec::new(),
    };
    let t1 = req.transcript(hash_of(&joiner.cert));
    req.signature = joiner.identity.signer.sign_bytes(&t1)?;
    let body = req.encode();
    joiner.y_busy = true;
    joiner.pending_join = Some(PendingJoin {
        net_id: net_id.to_string(),
        lead_id: lead_id.to_string(),
        request: body.clone(),
        th2: None,
        session_key: None,
    });
    Ok(Message::new(
        MsgType::JoinRequest,
        &joiner.device_id,
        lead_id,
        Channel::Y,
        body,
    )
    .expect("not a transfer"))
}

/// Step 2, lead: checks the joiner, then answers with SESSION_ESTABLISH
/// and the sealed NET_KEY_TRANSFER. Nothing changes if a check fails.
pub fn lead_handle_join(
    lead: &mut DeviceState,
    msg: &Message,
    now: u64,
    randomness: [u8; 32],
) -> Result<[Message; 2], JoinError> {
    if msg.msg_type() != MsgType::JoinRequest || msg.receiver() != lead.device_id {
        return Err(JoinError::Malformed("join request"));
    }
    if lead.y_busy {
        return Err(JoinError::Busy);
    }
    let req = Request::decode(msg.body()).map_err(malformed("join request"))?;
    if req.lead_id != lead.device_id {
        return Err(JoinError::Malformed("join request"));
    }
    let cert = Certificate::decode(&req.cert).map_err(malformed("joiner certificate"))?;
    check_peer(&cert, msg.sender(), lead, now)?;
    let hash = hash_of(&cert);
    if !gmr_verify(&cert.sig_public, &req.transcript(hash), &req.signature) {
        return Err(JoinError::TranscriptSignature);
    }
    let net_key = lead
        .active_key(NET_CHANNEL, NET_KEY_ROLE, &req.net_id)
        .ok_or_else(|| JoinError::NoNetKey(req.net_id.clone()))?
        .clone();
    if !cert.clearance.dominates(&net_key.classification) {
        return Err(JoinError::Clearance);
    }
    let pk = &cert.encaps_public;
    let suite = lead
        .registry
        .lookup(pk.suite_id)
        .map_err(|_| JoinError::Malformed("joiner suite"))?
        .clone();
    let session_id = session_key_id(msg.sender(), msg.body(), hash);
    if lead
        .key(JOIN_CHANNEL, &session_id)
        .is_some_and(|r| r.state() != KeyState::Destroyed)
    {
        return Err(JoinError::Busy);
    }

    let (ct, session) = cs_encapsulate(pk, randomness);
    let ct_bytes = ct.encode(&pk.group);
    let lead_cert = lead.cert.encode();
    let t2 = th2(hash, msg.body(), &lead_cert, &ct_bytes);
    let signature = lead.identity.signer.sign_bytes(&t2)?;

    let (enc, mac) = transfer_keys(hash, session.as_bytes(), &t2);
    let bytes = net_key.key_bytes().expect("active");
    let sealed = apply_keystream(&SymmetricKey::new(enc, pk.suite_id), &suite, bytes)
        .map_err(|_| JoinError::Decapsulation)?;
    let mut w = Writer::default();
    w.str16(&req.net_id)
        .str16(&net_key.key_id)
        .u8(net_key.classification.to_byte())
        .bytes32(&sealed);
    let mut transfer = w.into_bytes();
    let tag = hash.digest(&[b"join/tag", &mac, &transfer]);
    transfer.extend_from_slice(&tag);

    // The lead holds the session key only for the length of this step.
    let label = lead
        .channel_label(JOIN_CHANNEL)
        .unwrap_or(ClassificationLabel::UNCLASSIFIED);
    let mut rec = KeyRecord::new(
        session_id,
        KeyKind::Session,
        SESSION_ROLE,
        session.as_bytes().to_vec(),
        label,
        None,
        KeyState::Active,
        &req.net_id,
    )
    .expect("session records are valid");
    rec.destroy();
    lead.store_key(JOIN_CHANNEL, rec)
        .map_err(|_| JoinError::Busy)?;

    let mut w = Writer::default();
    w.str16(&req.net_id)
        .bytes32(&lead_cert)
        .bytes32(&ct_bytes)
        .bytes32(&signature);
    let establish = Message::new(
        MsgType::SessionEstablish,
        &lead.device_id,
        msg.sender(),
        Channel::Y,
        w.into_bytes(),
    )
    .expect("not a transfer");
    let transfer = Message::net_key_transfer(
        &lead.device_id,
        msg.sender(),
        Channel::Y,
        SealedTransfer(transfer),
    );
    Ok([establish, transfer])
}

/// Step 3, joiner: authenticates the lead and stores the session key.
pub fn joiner_handle_establish(
    joiner: &mut DeviceState,
    msg: &Message,
    now: u64,
) -> Result<(), JoinError> {
    let pending = joiner
        .pending_join
        .clone()
        .filter(|p| p.lead_id == msg.sender() && p.th2.is_none())
        .ok_or_else(|| JoinError::Unexpected(msg.sender().to_string()))?;
    if msg.msg_type() != MsgType::SessionEstablish {
        return Err(JoinError::Malformed("session establish"));
    }
    let mut r = Reader::new(msg.body());
    let parsed = (|| -> Result<_, WireError> {
        let net_id = r.str16("net_id")?;
        let cert = r.bytes32()?.to_vec();
        let ct = r.bytes32()?.to_vec();
        let sig = r.bytes32()?.to_vec();
        r.finish()?;
        Ok((net_id, cert, ct, sig))
    })();
    let (net_id, cert_bytes, ct_bytes, sig) = parsed.map_err(malformed("session establish"))?;
    if net_id != pending.net_id {
        return Err(JoinError::Malformed("session establish"));
    }
    let lead_cert = Certificate::decode(&cert_bytes).map_err(malformed("lead certificate"))?;
    check_peer(&lead_cert, msg.sender(), joiner, now)?;
    let hash = hash_of(&joiner.cert);
    let t2 = th2(hash, &pending.request, &cert_bytes, &ct_bytes);
    if !gmr_verify(&lead_cert.sig_public, &t2, &sig) {
        return Err(JoinError::TranscriptSignature);
    }
    let sk = &joiner.identity.encaps.secret;
    let ct =
        CsCiphertext::decode(&ct_bytes, &sk.public.group).map_err(|_| JoinError::Decapsulation)?;
    let session = sk
        .decapsulate_parsed(&ct)
        .map_err(|_| JoinError::Decapsulation)?;

    let session_id = session_key_id(&joiner.device_id, &pending.request, hash);
    let label = joiner
        .channel_label(JOIN_CHANNEL)
        .unwrap_or(ClassificationLabel::UNCLASSIFIED);
    let rec = KeyRecord::new(
        session_id.clone(),
        KeyKind::Session,
        SESSION_ROLE,
        session.as_bytes().to_vec(),
        label,
        None,
        KeyState::Active,
        &pending.net_id,
    )
    .expect("session records are valid");
    joiner
        .store_key(JOIN_CHANNEL, rec)
        .map_err(|_| JoinError::Busy)?;
    let p = joiner.pending_join.as_mut().expect("checked above");
    p.th2 = Some(t2);
    p.session_key = Some(session_id);
    Ok(())
}

/// Step 4, joiner: opens the transfer, installs the net key in channel x
/// and destroys the session key. Returns the installed key id.
pub fn joiner_handle_transfer(
    joiner: &mut DeviceState,
    msg: &Message,
) -> Result<String, JoinError> {
    let pending = joiner
        .pending_join
        .clone()
        .filter(|p| p.lead_id == msg.sender())
        .ok_or_else(|| JoinError::Unexpected(msg.sender().to_string()))?;
    let (Some(t2), Some(session_id)) = (pending.th2, pending.session_key.clone()) else {
        return Err(JoinError::Unexpected(msg.sender().to_string()));
    };
    if msg.msg_type() != MsgType::NetKeyTransfer || msg.body().len() < 32 {
        return Err(JoinError::Malformed("net-key transfer"));
    }
    let session = joiner
        .key(JOIN_CHANNEL, &session_id)
        .and_then(|r| r.key_bytes())
        .ok_or(JoinError::Decapsulation)?
        .to_vec();
    let hash = hash_of(&joiner.cert);
    let (enc, mac) = transfer_keys(hash, &session, &t2);
    let (body, tag) = msg.body().split_at(msg.body().len() - 32);
    if hash.digest(&[b"join/tag", &mac, body]) != tag {
        return Err(JoinError::Tag);
    }
    let mut r = Reader::new(body);
    let parsed = (|| -> Result<_, WireError> {
        let net_id = r.str16("net_id")?;
        let key_id = r.str16("key_id")?;
        let label = r.u8()?;
        let sealed = r.bytes32()?.to_vec();
        r.finish()?;
        Ok((net_id, key_id, label, sealed))
    })();
    let (net_id, key_id, label, sealed) = parsed.map_err(malformed("net-key transfer"))?;
    let label =
        ClassificationLabel::from_byte(label).ok_or(JoinError::Malformed("net-key label"))?;
    if net_id != pending.net_id {
        return Err(JoinError::Malformed("net-key transfer"));
    }
    let suite_id = joiner.cert.encaps_public.suite_id;
    let suite = joiner
        .registry
        .lookup(suite_id)
        .map_err(|_| JoinError::Malformed("suite"))?;
    let key = apply_keystream(&SymmetricKey::new(enc, suite_id), suite, &sealed)
        .map_err(|_| JoinError::Decapsulation)?;
    if !joiner
        .channel_label(NET_CHANNEL)
        .is_some_and(|l| l.dominates(&label))
    {
        return Err(JoinError::Clearance);
    }
    let rec = KeyRecord::osm(key_id.clone(), NET_KEY_ROLE, key, label, net_id);
    joiner
        .store_key(NET_CHANNEL, rec)
        .map_err(|_| JoinError::Malformed("duplicate net key"))?;
    abort_join(joiner);
    Ok(key_id)
}

/// Ends any join in progress: destroys the session key and frees channel y.
pub fn abort_join(joiner: &mut DeviceState) {
    if let Some(id) = joiner.pending_join.take().and_then(|p| p.session_key) {
        if let Some(r) = joiner
            .compartment_mut(JOIN_CHANNEL)
            .and_then(|c| c.records.get_mut(&id))
        {
            r.destroy();
        }
    }
    joiner.y_busy = false;
}

/// Runs the whole exchange between two in-process devices. On failure the
/// joiner is left idle with no session key and the lead unchanged.
pub fn net_join(
    joiner: &mut DeviceState,
    lead: &mut DeviceState,
    net_id: &str,
    now: u64,
    seed: [u8; 32],
) -> Result<JoinTranscript, NodeError> {
    let request = join_request(
        joiner,
        &lead.device_id,
        net_id,
        derive_seed(&seed, "join/nonce"),
    )?;
    let result = (|| {
        let [establish, transfer] =
            lead_handle_join(lead, &request, now, derive_seed(&seed, "join/encaps"))?;
        joiner_handle_establish(joiner, &establish, now)?;
        let key_id = joiner_handle_transfer(joiner, &transfer)?;
        Ok(JoinTranscript {
            messages: vec![request.clone(), establish, transfer],
            key_id,
        })
    })();
    if result.is_err() {
        abort_join(joiner);
    }
    result.map_err(NodeError::Join)
}
