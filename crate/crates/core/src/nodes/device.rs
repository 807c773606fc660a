use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::container::{
    open_container, ContainerId, EntryType, FullContainer, OpenContext, RecipientHeader,
};
use crate::cryptosuite::{apply_keystream, SuiteRegistry, SymmetricKey};
use crate::identity::{
    authenticate_operator, AuthError, CapabilityList, Certificate, DeviceTrust, Dongle, Identity,
    OperatorSession, Role, TrustStore,
};
use crate::lifecycle::{
    apply_algorithm_update, key_boundary, ActivationReport, KeyKind, KeyRecord, KeyState,
    LifecycleError, RolloverReport,
};
use crate::wire::Writer;

use super::join::PendingJoin;
use super::keys::KeyPackage;
use super::{ClassificationLabel, NodeError};

pub const DEVICE_SNAPSHOT_MAGIC: &[u8; 4] = b"DEVS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Phase {
    Preparation = 1,
    Operation = 2,
    Recovery = 3,
}

impl Phase {
    pub fn next(self) -> Phase {
        match self {
            Phase::Preparation => Phase::Operation,
            Phase::Operation => Phase::Recovery,
            Phase::Recovery => Phase::Preparation,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Preparation => "PREPARATION",
            Phase::Operation => "OPERATION",
            Phase::Recovery => "RECOVERY",
        })
    }
}

/// One channel's separate key memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Compartment {
    pub(crate) name: String,
    pub(crate) label: ClassificationLabel,
    pub(crate) records: BTreeMap<String, KeyRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ZeroizeScope {
    Channel(String),
    Mission,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadOutcome {
    Loaded {
        /// `(channel, key_id)` for every key stored.
        keys: Vec<(String, String)>,
        installed: Vec<(EntryType, String)>,
        algorithm: Option<ActivationReport>,
    },
    /// The container was loaded before; nothing changed.
    Replay,
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    pub device_id: String,
    pub(crate) identity: Identity,
    pub cert: Certificate,
    pub trust: TrustStore,
    pub registry: SuiteRegistry,
    pub caps: CapabilityList,
    pub operator_trust: DeviceTrust,
    pub(crate) channels: Vec<Compartment>,
    session: Option<OperatorSession>,
    phase: Phase,
    loaded: BTreeSet<ContainerId>,
    installed: Vec<(EntryType, String)>,
    pub(crate) y_busy: bool,
    pub(crate) pending_join: Option<PendingJoin>,
}

impl DeviceState {
    /// `channels` lists compartment names and labels; at least two are
    /// required and `y` must be one of them.
    pub fn new(
        identity: Identity,
        cert: Certificate,
        trust: TrustStore,
        registry: SuiteRegistry,
        caps: CapabilityList,
        channels: &[(&str, ClassificationLabel)],
    ) -> Result<Self, NodeError> {
        if channels.len() < 2 {
            return Err(NodeError::ChannelLayout(
                "a device needs at least two channels".into(),
            ));
        }
        let names: BTreeSet<&str> = channels.iter().map(|(n, _)| *n).collect();
        if names.len() != channels.len() {
            return Err(NodeError::ChannelLayout("duplicate channel name".into()));
        }
        if identity.role != Role::Device || cert.subject_id != identity.id {
            return Err(NodeError::ChannelLayout(
                "identity and certificate must name the device".into(),
            ));
        }
        Ok(DeviceState {
            device_id: identity.id.clone(),
            identity,
            cert,
            trust,
            registry,
            caps,
            operator_trust: DeviceTrust::default(),
            channels: channels
                .iter()
                .map(|(n, l)| Compartment {
                    name: n.to_string(),
                    label: *l,
                    records: BTreeMap::new(),
                })
                .collect(),
            session: None,
            phase: Phase::Preparation,
            loaded: BTreeSet::new(),
            installed: Vec::new(),
            y_busy: false,
            pending_join: None,
        })
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    pub fn channel_label(&self, channel: &str) -> Option<ClassificationLabel> {
        self.compartment(channel).map(|c| c.label)
    }

    fn compartment(&self, channel: &str) -> Option<&Compartment> {
        self.channels.iter().find(|c| c.name == channel)
    }

    pub(crate) fn compartment_mut(&mut self, channel: &str) -> Option<&mut Compartment> {
        self.channels.iter_mut().find(|c| c.name == channel)
    }

    /// The only read path into key memory: looks in `channel` and nowhere
    /// else.
    pub fn key(&self, channel: &str, key_id: &str) -> Option<&KeyRecord> {
        self.compartment(channel)?.records.get(key_id)
    }

    pub fn keys(&self, channel: &str) -> impl Iterator<Item = &KeyRecord> {
        self.compartment(channel)
            .into_iter()
            .flat_map(|c| c.records.values())
    }

    /// Active key with `role` for `infrastructure_id` in `channel`.
    pub fn active_key(
        &self,
        channel: &str,
        role: &str,
        infrastructure_id: &str,
    ) -> Option<&KeyRecord> {
        self.keys(channel).find(|r| {
            r.state() == KeyState::Active
                && r.role == role
                && r.infrastructure_id == infrastructure_id
        })
    }

    pub(crate) fn store_key(&mut self, channel: &str, record: KeyRecord) -> Result<(), NodeError> {
        let c = self
            .compartment_mut(channel)
            .ok_or_else(|| NodeError::UnknownChannel(channel.to_string()))?;
        if let Some(old) = c.records.get(&record.key_id) {
            if old.state() != KeyState::Destroyed {
                return Err(NodeError::DuplicateKey(record.key_id));
            }
        }
        if record.state() == KeyState::Standby
            && c.records.values().any(|r| {
                r.state() == KeyState::Standby && r.infrastructure_id == record.infrastructure_id
            })
        {
            return Err(LifecycleError::StandbyExists(record.infrastructure_id).into());
        }
        c.records.insert(record.key_id.clone(), record);
        Ok(())
    }

    /// Provisions a key directly, as a fill device would in preparation.
    pub fn provision_key(&mut self, channel: &str, record: KeyRecord) -> Result<(), NodeError> {
        self.store_key(channel, record)
    }

    /// Compartment whose label covers `label`, preferring one with the same
    /// compartment tag.
    pub fn designate_channel(&self, label: &ClassificationLabel) -> Option<&str> {
        let exact = self
            .channels
            .iter()
            .find(|c| c.label.compartment == label.compartment && c.label.dominates(label));
        exact
            .or_else(|| self.channels.iter().find(|c| c.label.dominates(label)))
            .map(|c| c.name.as_str())
    }

    pub fn login(
        &mut self,
        dongle: &mut Dongle,
        password: &str,
    ) -> Result<&OperatorSession, AuthError> {
        let s = authenticate_operator(dongle, password, &self.operator_trust)?;
        Ok(self.session.insert(s))
    }

    pub fn logout(&mut self) {
        self.session = None;
    }

    pub fn session(&self) -> Option<&OperatorSession> {
        self.session.as_ref()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Only the cyclic order PREPARATION → OPERATION → RECOVERY →
    /// PREPARATION is accepted.
    pub fn advance_phase(&mut self, to: Phase) -> Result<(), NodeError> {
        if self.phase.next() != to {
            return Err(NodeError::PhaseTransition(self.phase, to));
        }
        self.phase = to;
        Ok(())
    }

    pub fn y_busy(&self) -> bool {
        self.y_busy
    }

    pub fn has_loaded(&self, id: &ContainerId) -> bool {
        self.loaded.contains(id)
    }

    pub fn installed(&self) -> &[(EntryType, String)] {
        &self.installed
    }

    /// A staged suite switch happens here.
    pub fn key_boundary(&mut self) -> Option<crate::cryptosuite::SuiteId> {
        key_boundary(&mut self.registry)
    }

    /// Tamper response: zeroize everything.
    pub fn mark_tampered(&mut self) {
        self.operator_trust.tampered = true;
        device_zeroize(self, &ZeroizeScope::Mission);
    }

    /// Compromise of `infrastructure_id` in `channel`: the standby takes
    /// over and every active key is destroyed. Without a standby the active
    /// keys are still destroyed, since they can no longer be trusted, and
    /// the compromise is reported as unrecoverable.
    pub fn compromise(
        &mut self,
        channel: &str,
        infrastructure_id: &str,
        now: u64,
    ) -> Result<RolloverReport, NodeError> {
        let c = self
            .compartment_mut(channel)
            .ok_or_else(|| NodeError::UnknownChannel(channel.to_string()))?;
        let in_infra = |r: &KeyRecord| r.infrastructure_id == infrastructure_id;
        let standby = c
            .records
            .values()
            .find(|r| in_infra(r) && r.state() == KeyState::Standby)
            .map(|r| r.key_id.clone());
        let active: Vec<String> = c
            .records
            .values()
            .filter(|r| in_infra(r) && r.state() == KeyState::Active)
            .map(|r| r.key_id.clone())
            .collect();
        for id in &active {
            c.records.get_mut(id).expect("listed").destroy();
        }
        let promoted = standby.ok_or_else(|| {
            LifecycleError::UnrecoverableCompromise(infrastructure_id.to_string())
        })?;
        c.records
            .get_mut(&promoted)
            .expect("listed")
            .transition(KeyState::Active)?;
        Ok(RolloverReport {
            infrastructure_id: infrastructure_id.to_string(),
            tick: now,
            destroyed: active,
            promoted,
        })
    }

    fn traffic_key(&self, channel: &str, net_id: &str) -> Result<SymmetricKey, NodeError> {
        let rec = self
            .active_key(channel, "net", net_id)
            .ok_or_else(|| NodeError::NoNetKey(net_id.to_string()))?;
        let bytes = rec.key_bytes().expect("active keys hold bytes");
        SymmetricKey::from_slice(bytes, self.registry.active_id())
            .ok_or_else(|| NodeError::NoNetKey(net_id.to_string()))
    }

    /// Encrypts (or decrypts) net traffic on `channel` with the net key.
    pub fn net_traffic(
        &self,
        channel: &str,
        net_id: &str,
        data: &[u8],
    ) -> Result<Vec<u8>, NodeError> {
        let key = self.traffic_key(channel, net_id)?;
        Ok(apply_keystream(&key, self.registry.active(), data)?)
    }

    /// Serialized state: metadata, every compartment, and key files.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(DEVICE_SNAPSHOT_MAGIC, 1);
        w.str16(&self.device_id)
            .u8(self.phase as u8)
            .u8(self.y_busy as u8)
            .u16(self.channels.len() as u16);
        for c in &self.channels {
            w.str16(&c.name)
                .u8(c.label.to_byte())
                .u32(c.records.len() as u32);
            for r in c.records.values() {
                r.write(&mut w);
            }
        }
        w.u32(self.loaded.len() as u32);
        for id in &self.loaded {
            w.raw(id);
        }
        w.bytes32(&self.identity.encode_secret())
            .bytes32(&self.cert.encode());
        w.into_bytes()
    }
}

/// Loads a fill. Every entry must be within the operator's clearance and
/// every key must have a compartment; otherwise nothing is loaded.
pub fn device_load_fill(
    device: &mut DeviceState,
    header: &RecipientHeader,
    container: &FullContainer,
    now: u64,
) -> Result<LoadOutcome, NodeError> {
    let session = device.session.clone().ok_or(NodeError::NoSession)?;
    if !device.caps.allows(session.role.name(), "load_fill") {
        return Err(NodeError::CapabilityDenied(
            session.role.name().into(),
            "load_fill".into(),
        ));
    }
    if header.recipient_id != device.device_id {
        return Err(NodeError::NotAddressee(header.recipient_id.clone()));
    }
    if device.loaded.contains(&container.container_id) {
        return Ok(LoadOutcome::Replay);
    }
    let opened = open_container(
        container,
        header,
        &device.identity.encaps.secret,
        OpenContext {
            trust: &device.trust,
            suites: &device.registry,
            now,
        },
    )?;
    if let Some(e) = opened
        .entries
        .iter()
        .find(|e| !session.clearance.dominates(&e.classification))
    {
        return Err(NodeError::Clearance {
            entry: e.name.clone(),
            label: e.classification,
            clearance: session.clearance,
        });
    }

    let mut next = device.clone();
    let mut keys = Vec::new();
    let mut algorithm = None;
    for e in &opened.entries {
        match e.entry_type {
            EntryType::KeyMaterial => {
                let channel = next
                    .designate_channel(&e.classification)
                    .ok_or(NodeError::NoCompartment(e.classification))?
                    .to_string();
                let package = KeyPackage::decode(&e.content)
                    .map_err(|err| NodeError::BadKeyMaterial(e.name.clone(), err.to_string()))?;
                for rec in package.records {
                    if !next
                        .channel_label(&channel)
                        .is_some_and(|l| l.dominates(&rec.classification))
                    {
                        return Err(NodeError::NoCompartment(rec.classification));
                    }
                    keys.push((channel.clone(), rec.key_id.clone()));
                    next.store_key(&channel, rec)?;
                }
            }
            EntryType::AlgorithmUpdate => {
                algorithm = Some(apply_algorithm_update(&mut next.registry, &opened.entries)?);
            }
            EntryType::Certificate => {
                if let Ok(cert) = Certificate::decode(&e.content) {
                    let _ = next.trust.cache_certificate(cert, now);
                }
            }
            EntryType::Waveform | EntryType::Policy => {}
        }
        next.installed.push((e.entry_type, e.name.clone()));
    }
    next.loaded.insert(container.container_id);
    let installed = next.installed[device.installed.len()..].to_vec();
    *device = next;
    Ok(LoadOutcome::Loaded {
        keys,
        installed,
        algorithm,
    })
}

/// Destroys every key in scope. Mission scope also ends the session and
/// moves an operating device into recovery. Idempotent.
pub fn device_zeroize(device: &mut DeviceState, scope: &ZeroizeScope) -> usize {
    let mut destroyed = 0;
    for c in device.channels.iter_mut() {
        let in_scope = match scope {
            ZeroizeScope::Channel(name) => &c.name == name,
            ZeroizeScope::Mission => true,
        };
        if !in_scope {
            continue;
        }
        for r in c.records.values_mut() {
            if r.state() != KeyState::Destroyed {
                r.destroy();
                destroyed += 1;
            }
        }
    }
    if *scope == ZeroizeScope::Mission {
        device.session = None;
        device.pending_join = None;
        device.y_busy = false;
        if device.phase == Phase::Operation {
            device.phase = Phase::Recovery;
        }
    }
    destroyed
}

/// Scans a device for SESSION records still marked active.
pub fn active_session_keys(device: &DeviceState) -> usize {
    device
        .channels
        .iter()
        .flat_map(|c| c.records.values())
        .filter(|r| r.kind == KeyKind::Session && r.state() == KeyState::Active)
        .count()
}
