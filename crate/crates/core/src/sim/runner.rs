//! Discrete-event execution of a scenario. Every step is a function of the
//! config and the master seed, so two runs give byte-identical logs.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::container::{ArchiveEntry, EntryType, FullContainer, RecipientHeader};
use crate::cryptosuite::arith::{derive_rng, derive_seed};
use crate::cryptosuite::{
    generate_suite, generate_suite_with, AlgorithmSuite, HashId, SuiteOptions, SuiteRegistry,
};
use crate::identity::{
    AdminCredentials, CapabilityList, DeviceTrust, Dongle, Identity, Role, TrustStore,
};
use crate::lifecycle::{KeyKind, KeyRecord, KeyState, LifecycleError};
use crate::nodes::{
    abort_join, active_session_keys, algorithm_update_entry, combine_shares, device_load_fill,
    join_request, joiner_handle_establish, joiner_handle_transfer, kdms_forward, lead_handle_join,
    ngdm_generate_batch, rsms_package_update, BatchSpec, Channel, ClassificationLabel, DeviceState,
    JoinError, KdmsTree, KeyPackage, LoadOutcome, Message, MsgType, NodeError, Phase, RnmsState,
    RsmsState, NET_CHANNEL,
};

use super::config::{ConfigError, EventKind, ScenarioConfig, TimelineEvent};

/// Certificates issued at setup cover the whole run.
const CERT_LIFETIME: u64 = 1_000_000;
const NET_KEY_LABEL: ClassificationLabel = ClassificationLabel::NATO_SECRET;
const PROBE: &[u8] = b"net traffic probe";
const OPERATOR_PASSWORD: &str = "sim-operator";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// `--seed`, then the scenario's own seed, then `SDRKMS_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &ScenarioConfig, env: Option<&str>) -> u64 {
    flag.or(cfg.seed)
        .or_else(|| env.and_then(|v| v.trim().parse().ok()))
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub seed: u64,
    pub log: Vec<String>,
    pub devices: BTreeMap<String, DeviceState>,
    pub rnms: BTreeMap<String, RnmsState>,
    pub kdms: Option<KdmsTree>,
    /// Every message handed to the network, in send order.
    pub wire: Vec<Message>,
    /// Every plaintext key value that existed during the run.
    pub red_keys: BTreeSet<Vec<u8>>,
    /// Session keys negotiated during joins.
    pub session_keys: BTreeSet<Vec<u8>>,
}

impl SimOutcome {
    pub fn log_text(&self) -> String {
        let mut s = self.log.join("\n");
        s.push('\n');
        s
    }
}

pub fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

enum Item {
    Timeline(usize),
    Deliver { id: u64, msg: Message, lost: bool },
    JoinTimeout { joiner: String, token: u64 },
}

struct JoinAttempt {
    net: String,
    attempt: u32,
    token: u64,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    master: [u8; 32],
    rng: ChaCha20Rng,
    log: Vec<String>,
    queue: BTreeMap<(u64, u64), Item>,
    seq: u64,
    msg_id: u64,
    counter: u64,
    rsms: RsmsState,
    rsms_id: String,
    ngdm_id: String,
    rnms: BTreeMap<String, RnmsState>,
    kdms: Option<KdmsTree>,
    devices: BTreeMap<String, DeviceState>,
    inbox: BTreeMap<String, BTreeMap<[u8; 16], FullContainer>>,
    held: BTreeMap<String, Vec<RecipientHeader>>,
    joins: BTreeMap<String, JoinAttempt>,
    key_gen: BTreeMap<String, u32>,
    wire: Vec<Message>,
    red: BTreeSet<Vec<u8>>,
    sessions: BTreeSet<Vec<u8>>,
}

fn short(id: &[u8]) -> String {
    id[..4].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `cfg` with `seed` as master seed.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<SimOutcome, SimError> {
    let mut sim = Sim::setup(cfg, seed)?;
    for (i, e) in cfg.timeline.iter().enumerate() {
        sim.schedule(e.tick, Item::Timeline(i));
    }
    while let Some(((tick, _), item)) = sim.queue.pop_first() {
        match item {
            Item::Timeline(i) => sim.timeline(tick, &cfg.timeline[i])?,
            Item::Deliver { id, msg, lost } => sim.deliver(tick, id, msg, lost)?,
            Item::JoinTimeout { joiner, token } => sim.join_timeout(tick, &joiner, token)?,
        }
        sim.refresh_red();
        sim.check_sessions()?;
    }
    let mut out = sim.finish()?;
    out.seed = seed;
    Ok(out)
}

impl<'a> Sim<'a> {
    fn setup(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        let setup = |e: String| SimError::Setup(e);
        let master = HashId::Sha256.digest(&[b"sim/master", &seed.to_be_bytes()]);
        let suite = generate_suite(cfg.suite_bits, derive_seed(&master, "sim/suite"))
            .map_err(|e| setup(e.to_string()))?;
        let caps = CapabilityList::default_policy();
        let ident = |n: &super::config::NodeSpec, suite: &AlgorithmSuite| {
            Identity::generate(
                &n.id,
                n.role,
                n.clearance,
                suite,
                derive_seed(&master, &format!("sim/node/{}", n.id)),
            )
            .map_err(|e| setup(e.to_string()))
        };
        let rsms_spec = cfg
            .nodes
            .iter()
            .find(|n| n.role == Role::Rsms)
            .ok_or_else(|| setup("no RSMS node".into()))?;
        let mut rsms = RsmsState::new(
            ident(rsms_spec, &suite)?,
            caps.clone(),
            SuiteRegistry::new(suite.clone()),
            0,
            CERT_LIFETIME,
        )
        .map_err(|e| setup(e.to_string()))?;

        let mut devices = BTreeMap::new();
        for n in cfg.nodes.iter().filter(|n| n.role == Role::Device) {
            let id = ident(n, &suite)?;
            let cert = rsms
                .certify(&id.subject_info(), 0, CERT_LIFETIME)
                .map_err(|e| setup(e.to_string()))?;
            let trust =
                TrustStore::with_root(rsms.cert.clone()).map_err(|e| setup(e.to_string()))?;
            let mut d = DeviceState::new(
                id,
                cert,
                trust,
                SuiteRegistry::new(suite.clone()),
                caps.clone(),
                &[
                    ("x", ClassificationLabel::NATO_SECRET),
                    ("y", ClassificationLabel::NATIONAL_CONFIDENTIAL),
                ],
            )
            .map_err(|e| setup(e.to_string()))?;
            let operator = format!("op-{}", n.id);
            d.operator_trust = DeviceTrust::enrolling([operator.clone()]);
            let mut dongle = Dongle::provision(
                derive_seed(&master, &format!("sim/dongle/{}", n.id)),
                OPERATOR_PASSWORD,
                &AdminCredentials {
                    operator_id: operator,
                    role: Role::Operator,
                    clearance: n.clearance,
                },
            );
            d.login(&mut dongle, OPERATOR_PASSWORD)
                .map_err(|e| setup(e.to_string()))?;
            d.advance_phase(Phase::Operation)
                .map_err(|e| setup(e.to_string()))?;
            devices.insert(n.id.clone(), d);
        }

        let kdms = if cfg.kdms_edges.is_empty() {
            None
        } else {
            let edges: Vec<(&str, &str)> = cfg
                .kdms_edges
                .iter()
                .map(|(p, c)| (p.as_str(), c.as_str()))
                .collect();
            Some(KdmsTree::from_edges(&edges).map_err(|e| setup(e.to_string()))?)
        };

        let mut sim = Sim {
            cfg,
            master,
            rng: derive_rng(&master, "sim/channel"),
            log: Vec::new(),
            queue: BTreeMap::new(),
            seq: 0,
            msg_id: 0,
            counter: 0,
            rsms_id: rsms_spec.id.clone(),
            ngdm_id: cfg
                .ids_with_role(Role::Ngdm)
                .next()
                .unwrap_or(&rsms_spec.id)
                .to_string(),
            rsms,
            rnms: cfg
                .ids_with_role(Role::Rnms)
                .map(|id| (id.to_string(), RnmsState::new(id)))
                .collect(),
            kdms,
            devices,
            inbox: BTreeMap::new(),
            held: BTreeMap::new(),
            joins: BTreeMap::new(),
            key_gen: BTreeMap::new(),
            wire: Vec::new(),
            red: BTreeSet::new(),
            sessions: BTreeSet::new(),
        };
        sim.record(
            0,
            &sim.rsms_id.clone(),
            "SETUP",
            &format!(
                "suite={} devices={} seed={seed}",
                sim.rsms.registry.active_id().0,
                sim.devices.len()
            ),
        );

        // Preparation: the lead and preloaded members get the net key and
        // standby over the wire before the mission starts.
        for net in &cfg.nets {
            let active = sim.generate_net_key(0, &net.id, net.shares, KeyState::Active)?;
            let mut records = vec![active];
            if net.standby {
                records.push(sim.generate_net_key(0, &net.id, net.shares, KeyState::Standby)?);
            }
            let entry = ArchiveEntry::new(
                EntryType::KeyMaterial,
                format!("{}/fill", net.id),
                NET_KEY_LABEL,
                KeyPackage::new(records).encode(),
            );
            let targets: Vec<String> = std::iter::once(net.lead.clone())
                .chain(net.preload.clone())
                .collect();
            sim.distribute(0, &targets, vec![entry], "direct")?;
        }
        Ok(sim)
    }

    fn schedule(&mut self, tick: u64, item: Item) {
        self.seq += 1;
        self.queue.insert((tick, self.seq), item);
    }

    fn record(&mut self, tick: u64, node: &str, event: &str, detail: &str) {
        self.log.push(format!("{tick}|{node}|{event}|{detail}"));
    }

    fn next_seed(&mut self, label: &str) -> [u8; 32] {
        self.counter += 1;
        derive_seed(&self.master, &format!("{label}/{}", self.counter))
    }

    fn generate_net_key(
        &mut self,
        tick: u64,
        net: &str,
        shares: usize,
        state: KeyState,
    ) -> Result<KeyRecord, SimError> {
        let n = {
            let g = self.key_gen.entry(net.to_string()).or_insert(0);
            *g += 1;
            *g
        };
        let spec = BatchSpec {
            count: shares,
            classification: NET_KEY_LABEL,
            suite_id: self.rsms.registry.active_id(),
            infrastructure_id: net.to_string(),
            id_prefix: format!("{net}/share{n}"),
        };
        let seed = self.next_seed("sim/ngdm");
        let batch = ngdm_generate_batch(&spec, &self.rsms.registry, seed)
            .map_err(|e| SimError::Setup(e.to_string()))?;
        let parts: Vec<&[u8]> = batch
            .iter()
            .map(|r| r.key_bytes().expect("fresh"))
            .collect();
        let key = combine_shares(&parts).map_err(|e| SimError::Setup(e.to_string()))?;
        for r in &batch {
            self.red.insert(r.key_bytes().expect("fresh").to_vec());
        }
        self.red.insert(key.clone());
        let key_id = format!("{net}/k{n}");
        let ngdm = self.ngdm_id.clone();
        self.record(
            tick,
            &ngdm,
            "KEYGEN",
            &format!("key={key_id} shares={shares} state={state}"),
        );
        KeyRecord::new(
            key_id,
            KeyKind::Osm,
            "net",
            key,
            NET_KEY_LABEL,
            None,
            state,
            net,
        )
        .map_err(|e| SimError::Setup(e.to_string()))
    }

    /// Hands a message to the network. Loss is drawn here; the outcome is
    /// logged when the message would arrive.
    fn send(&mut self, tick: u64, msg: Message) -> Result<(), SimError> {
        self.msg_id += 1;
        let id = self.msg_id;
        if let Some(k) = self.red.iter().find(|k| contains_bytes(msg.body(), k)) {
            return Err(SimError::Invariant(format!(
                "{tick}|{}|SEND|#{id} {} carries plaintext key material {}",
                msg.sender(),
                msg.msg_type(),
                short(k)
            )));
        }
        let model = self.cfg.channel(msg.channel());
        let draw: f64 = self.rng.gen();
        let lost = draw < model.loss;
        self.record(
            tick,
            msg.sender(),
            "SEND",
            &format!(
                "#{id} {} ->{} ch={} bytes={}",
                msg.msg_type(),
                msg.receiver(),
                msg.channel(),
                msg.body().len()
            ),
        );
        self.wire.push(msg.clone());
        self.schedule(tick + model.latency, Item::Deliver { id, msg, lost });
        Ok(())
    }

    fn deliver(&mut self, tick: u64, id: u64, msg: Message, lost: bool) -> Result<(), SimError> {
        let to = msg.receiver().to_string();
        let what = format!("#{id} {} from {}", msg.msg_type(), msg.sender());
        if lost {
            self.record(tick, &to, "LOST", &what);
            return Ok(());
        }
        if let Some(rnms) = self.rnms.get_mut(&to) {
            let before = rnms.quarantined().len();
            let out = rnms.route(&msg, tick);
            if rnms.quarantined().len() > before {
                let reason = rnms.audit().last().cloned().unwrap_or_default();
                let reason = reason.rsplit(": ").next().unwrap_or("").to_string();
                self.record(tick, &to, "QUARANTINE", &format!("{what}: {reason}"));
            } else {
                self.record(tick, &to, "DELIVER", &what);
            }
            for m in out {
                self.send(tick, m)?;
            }
            return Ok(());
        }
        if self.devices.contains_key(&to) {
            return self.device_receive(tick, &to, &what, &msg);
        }
        self.record(tick, &to, "QUARANTINE", &format!("{what}: no handler"));
        Ok(())
    }

    fn device_receive(
        &mut self,
        tick: u64,
        dev: &str,
        what: &str,
        msg: &Message,
    ) -> Result<(), SimError> {
        let quarantine = |s: &mut Self, reason: String| {
            s.record(tick, dev, "QUARANTINE", &format!("{what}: {reason}"));
            Ok(())
        };
        match msg.msg_type() {
            MsgType::Container => {
                let Ok(c) = FullContainer::decode(msg.body()) else {
                    return quarantine(self, "malformed".into());
                };
                self.record(tick, dev, "DELIVER", what);
                let cid = c.container_id;
                self.inbox
                    .entry(dev.to_string())
                    .or_default()
                    .insert(cid, c);
                let held = self.held.remove(dev).unwrap_or_default();
                let (ready, wait): (Vec<_>, Vec<_>) =
                    held.into_iter().partition(|h| h.container_id == cid);
                self.held.insert(dev.to_string(), wait);
                for h in ready {
                    match self.load(tick, dev, &h) {
                        Ok(records) => {
                            for (event, detail) in records {
                                self.record(tick, dev, event, &detail);
                            }
                        }
                        Err(reason) => self.record(tick, dev, "LOAD_FAILED", &reason),
                    }
                }
                Ok(())
            }
            MsgType::Header => {
                let Ok(h) = RecipientHeader::decode(msg.body()) else {
                    return quarantine(self, "malformed".into());
                };
                if h.recipient_id != dev {
                    return quarantine(self, "misrouted".into());
                }
                let have = self
                    .inbox
                    .get(dev)
                    .is_some_and(|i| i.contains_key(&h.container_id));
                if !have {
                    self.record(tick, dev, "DELIVER", &format!("{what} held"));
                    self.held.entry(dev.to_string()).or_default().push(h);
                    return Ok(());
                }
                match self.load(tick, dev, &h) {
                    Ok(records) => {
                        self.record(tick, dev, "DELIVER", what);
                        for (event, detail) in records {
                            self.record(tick, dev, event, &detail);
                        }
                        Ok(())
                    }
                    Err(reason) => quarantine(self, reason),
                }
            }
            MsgType::JoinRequest => {
                let randomness = self.next_seed("sim/join/encaps");
                let d = self.devices.get_mut(dev).expect("known device");
                match lead_handle_join(d, msg, tick, randomness) {
                    Ok(replies) => {
                        self.record(tick, dev, "DELIVER", what);
                        for m in replies {
                            self.send(tick, m)?;
                        }
                        Ok(())
                    }
                    Err(e) => quarantine(self, e.to_string()),
                }
            }
            MsgType::SessionEstablish => {
                let d = self.devices.get_mut(dev).expect("known device");
                match joiner_handle_establish(d, msg, tick) {
                    Ok(()) => {
                        let keys: Vec<Vec<u8>> = d
                            .keys("y")
                            .filter(|r| r.kind == KeyKind::Session)
                            .filter_map(|r| r.key_bytes().map(<[u8]>::to_vec))
                            .collect();
                        self.sessions.extend(keys);
                        self.record(tick, dev, "DELIVER", what);
                        Ok(())
                    }
                    Err(e) => quarantine(self, e.to_string()),
                }
            }
            MsgType::NetKeyTransfer => {
                let d = self.devices.get_mut(dev).expect("known device");
                match joiner_handle_transfer(d, msg) {
                    Ok(key_id) => {
                        self.record(tick, dev, "DELIVER", what);
                        let net = self.joins.remove(dev).map(|j| j.net).unwrap_or_default();
                        self.record(tick, dev, "SESSION_DESTROYED", &format!("net={net}"));
                        self.record(
                            tick,
                            dev,
                            "JOIN_COMPLETE",
                            &format!("net={net} key={key_id}"),
                        );
                        self.probe(tick, &net);
                        Ok(())
                    }
                    Err(e) => quarantine(self, e.to_string()),
                }
            }
            _ => quarantine(self, "no handler".into()),
        }
    }

    /// Opens a held container with `h` and returns the records to log.
    fn load(
        &mut self,
        tick: u64,
        dev: &str,
        h: &RecipientHeader,
    ) -> Result<Vec<(&'static str, String)>, String> {
        let c = self.inbox[dev][&h.container_id].clone();
        let d = self.devices.get_mut(dev).expect("known device");
        let outcome =
            device_load_fill(d, h, &c, tick).map_err(|e| format!("{}: {e}", e.reason()))?;
        let cid = short(&c.container_id);
        let mut out = Vec::new();
        match outcome {
            LoadOutcome::Replay => out.push(("REPLAY", format!("container={cid}"))),
            LoadOutcome::Loaded {
                keys,
                installed,
                algorithm,
            } => {
                out.push((
                    "DECRYPT",
                    format!("container={cid} entries={}", installed.len()),
                ));
                if let Some(a) = algorithm {
                    out.push(("SUITE_STAGED", format!("suite={}", a.suite_id.0)));
                }
                if !keys.is_empty() {
                    let list: Vec<String> =
                        keys.iter().map(|(ch, k)| format!("{ch}:{k}")).collect();
                    out.push(("KEYS_LOADED", list.join(",")));
                    // Loading key material is a key-update boundary.
                    if let Some(s) = d.key_boundary() {
                        out.push(("SUITE_ACTIVE", format!("suite={}", s.0)));
                    }
                }
            }
        }
        Ok(out)
    }

    fn distribute(
        &mut self,
        tick: u64,
        targets: &[String],
        entries: Vec<ArchiveEntry>,
        via: &str,
    ) -> Result<(), SimError> {
        let certs: Vec<_> = targets
            .iter()
            .map(|t| self.devices[t].cert.clone())
            .collect();
        let seed = self.next_seed("sim/package");
        let rsms_id = self.rsms_id.clone();
        let update = match rsms_package_update(&mut self.rsms, &entries, &certs, tick, seed) {
            Ok(u) => u,
            Err(e) => {
                self.record(
                    tick,
                    &rsms_id,
                    "PACKAGE_FAILED",
                    &format!("{}: {e}", e.reason()),
                );
                return Ok(());
            }
        };
        let c = update.container.encode();
        let header_bytes: usize = update.headers.iter().map(|h| h.encode().len()).sum();
        self.record(
            tick,
            &rsms_id,
            "SEAL",
            &format!(
                "container={} recipients={} payload={} headers={header_bytes} via={via}",
                short(&update.container.container_id),
                targets.len(),
                update.container.payload.len()
            ),
        );
        let msg = |from: &str, to: &str, ch, t, body: Vec<u8>| {
            Message::new(t, from, to, ch, body).expect("not a transfer")
        };
        match via {
            "direct" | "manual" => {
                let ch = if via == "manual" {
                    Channel::Manual
                } else {
                    Channel::Wired
                };
                for (t, h) in targets.iter().zip(&update.headers) {
                    self.send(tick, msg(&rsms_id, t, ch, MsgType::Container, c.clone()))?;
                    self.send(tick, msg(&rsms_id, t, ch, MsgType::Header, h.encode()))?;
                }
            }
            "kdms" => {
                let tree = self.kdms.as_mut().expect("validated");
                let root = tree.root().expect("validated").to_string();
                let names: Vec<&str> = targets.iter().map(String::as_str).collect();
                match kdms_forward(tree, &c, &root, &names) {
                    Ok(trace) => {
                        for (from, to) in &trace.hops {
                            self.record(
                                tick,
                                from,
                                "RELAY",
                                &format!(
                                    "->{to} container={}",
                                    short(&update.container.container_id)
                                ),
                            );
                        }
                        for (t, h) in targets.iter().zip(&update.headers) {
                            let parent = trace
                                .hops
                                .iter()
                                .find(|(_, to)| to == t)
                                .map(|(from, _)| from.clone())
                                .unwrap_or(root.clone());
                            self.send(
                                tick,
                                msg(&parent, t, Channel::Wired, MsgType::Container, c.clone()),
                            )?;
                            self.send(
                                tick,
                                msg(&parent, t, Channel::Wired, MsgType::Header, h.encode()),
                            )?;
                        }
                    }
                    Err(e) => self.record(tick, &root, "KDMS_FAILED", &e.to_string()),
                }
            }
            rnms => {
                self.send(
                    tick,
                    msg(&rsms_id, rnms, Channel::Wired, MsgType::Container, c),
                )?;
                for h in &update.headers {
                    self.send(
                        tick,
                        msg(&rsms_id, rnms, Channel::Wired, MsgType::Header, h.encode()),
                    )?;
                }
            }
        }
        Ok(())
    }

    fn default_via(&self, e: &TimelineEvent) -> String {
        e.param("via")
            .map(str::to_string)
            .or_else(|| self.rnms.keys().next().cloned())
            .unwrap_or_else(|| "direct".into())
    }

    fn holds_net_key(&self, dev: &str, net: &str, state: KeyState) -> bool {
        self.devices[dev]
            .keys(NET_CHANNEL)
            .any(|r| r.infrastructure_id == net && r.state() == state)
    }

    fn timeline(&mut self, tick: u64, e: &TimelineEvent) -> Result<(), SimError> {
        let rsms_id = self.rsms_id.clone();
        match e.kind {
            EventKind::PackageUpdate | EventKind::ManualTransfer => {
                let targets = e.list("to");
                let entries = match (e.param("content"), e.param("net")) {
                    (Some("standby"), Some(net)) => {
                        let rec = self.generate_net_key(
                            tick,
                            net,
                            self.cfg.net(net).map_or(1, |n| n.shares),
                            KeyState::Standby,
                        )?;
                        vec![ArchiveEntry::new(
                            EntryType::KeyMaterial,
                            format!("{net}/standby"),
                            NET_KEY_LABEL,
                            KeyPackage::new(vec![rec]).encode(),
                        )]
                    }
                    _ => {
                        let name = e
                            .param("name")
                            .map_or_else(|| format!("waveform-{tick}"), str::to_string);
                        let mut rng = derive_rng(&self.master, &format!("sim/waveform/{name}"));
                        let image: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
                        vec![ArchiveEntry::new(
                            EntryType::Waveform,
                            name,
                            ClassificationLabel::UNCLASSIFIED,
                            image,
                        )]
                    }
                };
                let via = if e.kind == EventKind::ManualTransfer {
                    "manual".to_string()
                } else {
                    self.default_via(e)
                };
                self.record(
                    tick,
                    &rsms_id,
                    e.kind.name(),
                    &format!("to={}", targets.join(",")),
                );
                self.distribute(tick, &targets, entries, &via)
            }
            EventKind::NetJoin => {
                let joiner = e.param("joiner").expect("validated").to_string();
                let net = e.param("net").expect("validated").to_string();
                self.start_join(tick, &joiner, &net, 1)
            }
            EventKind::Compromise => {
                let net = e.param("net").expect("validated").to_string();
                self.record(tick, &rsms_id, "COMPROMISE", &format!("net={net}"));
                let holders: Vec<String> = self
                    .cfg
                    .net(&net)
                    .expect("validated")
                    .holders()
                    .cloned()
                    .collect();
                for dev in holders {
                    let held = self.devices[&dev].keys(NET_CHANNEL).any(|r| {
                        r.infrastructure_id == net
                            && matches!(r.state(), KeyState::Active | KeyState::Standby)
                    });
                    if !held {
                        continue;
                    }
                    let doomed: Vec<String> = self.devices[&dev]
                        .keys(NET_CHANNEL)
                        .filter(|r| r.infrastructure_id == net && r.state() == KeyState::Active)
                        .map(|r| r.key_id.clone())
                        .collect();
                    let d = self.devices.get_mut(&dev).expect("known");
                    match d.compromise(NET_CHANNEL, &net, tick) {
                        Ok(report) => {
                            for k in &report.destroyed {
                                self.record(tick, &dev, "KEY_DESTROYED", k);
                            }
                            self.record(tick, &dev, "KEY_PROMOTED", &report.promoted);
                        }
                        Err(NodeError::Lifecycle(LifecycleError::UnrecoverableCompromise(_))) => {
                            for k in &doomed {
                                self.record(tick, &dev, "KEY_DESTROYED", k);
                            }
                            self.record(
                                tick,
                                &dev,
                                "UNRECOVERABLE",
                                &format!("net={net} no standby"),
                            );
                        }
                        Err(e) => self.record(tick, &dev, "ROLLOVER_FAILED", &e.to_string()),
                    }
                }
                self.probe(tick, &net);
                Ok(())
            }
            EventKind::Rollover => {
                let net = e.param("net").expect("validated").to_string();
                let spec = self.cfg.net(&net).expect("validated").clone();
                if let Some(s) = self.rsms.registry.activate_pending() {
                    self.record(tick, &rsms_id, "SUITE_ACTIVE", &format!("suite={}", s.0));
                }
                let targets: Vec<String> = spec
                    .holders()
                    .filter(|d| !self.holds_net_key(d, &net, KeyState::Standby))
                    .cloned()
                    .collect();
                let rec = self.generate_net_key(tick, &net, spec.shares, KeyState::Standby)?;
                self.record(
                    tick,
                    &rsms_id,
                    "ROLLOVER",
                    &format!("net={net} standby={} to={}", rec.key_id, targets.join(",")),
                );
                if targets.is_empty() {
                    return Ok(());
                }
                let entry = ArchiveEntry::new(
                    EntryType::KeyMaterial,
                    format!("{net}/standby"),
                    NET_KEY_LABEL,
                    KeyPackage::new(vec![rec]).encode(),
                );
                let via = self.default_via(e);
                self.distribute(tick, &targets, vec![entry], &via)
            }
            EventKind::Sync => {
                let a = e.param("a").expect("validated").to_string();
                let b = e.param("b").expect("validated").to_string();
                if let Some((k, v)) = e.param("write").and_then(|w| w.split_once(':')) {
                    self.rnms.get_mut(&a).expect("validated").planning.put(k, v);
                    self.record(tick, &a, "PLAN_WRITE", &format!("{k}={v}"));
                }
                for (from, to) in [(&a, &b), (&b, &a)] {
                    let digest = self.rnms[from].planning.digest();
                    let m = Message::new(MsgType::SyncDigest, from, to, Channel::Wired, digest)
                        .expect("not a transfer");
                    self.send(tick, m)?;
                }
                Ok(())
            }
            EventKind::AlgorithmUpdate => {
                let id = match e.param("suite_id") {
                    Some(s) => s.parse().expect("validated"),
                    None => self.rsms.registry.ids().map(|s| s.0).max().unwrap_or(1) + 1,
                };
                let opts = SuiteOptions::new(
                    self.cfg.suite_bits,
                    derive_seed(&self.master, &format!("sim/suite/{id}")),
                )
                .suite_id(id);
                let suite = generate_suite_with(&opts)
                    .map_err(|e| SimError::Setup(e.to_string()))?
                    .0;
                let staged = self
                    .rsms
                    .registry
                    .register(suite.clone())
                    .and_then(|_| self.rsms.registry.stage_activation(suite.suite_id));
                if let Err(err) = staged {
                    self.record(tick, &rsms_id, "ALGORITHM_UPDATE_FAILED", &err.to_string());
                    return Ok(());
                }
                let targets = match e.list("to") {
                    t if t.is_empty() => self.devices.keys().cloned().collect(),
                    t => t,
                };
                self.record(
                    tick,
                    &rsms_id,
                    "ALGORITHM_UPDATE",
                    &format!("suite={id} to={}", targets.join(",")),
                );
                let via = self.default_via(e);
                self.distribute(tick, &targets, vec![algorithm_update_entry(&suite)], &via)
            }
        }
    }

    fn start_join(
        &mut self,
        tick: u64,
        joiner: &str,
        net: &str,
        attempt: u32,
    ) -> Result<(), SimError> {
        let lead = self.cfg.net(net).expect("validated").lead.clone();
        let nonce = self.next_seed("sim/join/nonce");
        let token = self.counter;
        let d = self.devices.get_mut(joiner).expect("validated");
        self.joins.insert(
            joiner.to_string(),
            JoinAttempt {
                net: net.to_string(),
                attempt,
                token,
            },
        );
        match join_request(d, &lead, net, nonce) {
            Ok(m) => {
                self.record(
                    tick,
                    joiner,
                    "JOIN_START",
                    &format!("net={net} lead={lead} attempt={attempt}"),
                );
                self.send(tick, m)?;
            }
            Err(JoinError::Busy) => {
                self.record(
                    tick,
                    joiner,
                    "JOIN_BUSY",
                    &format!("net={net} attempt={attempt}"),
                );
            }
            Err(e) => {
                self.joins.remove(joiner);
                self.record(tick, joiner, "JOIN_FAILED", &format!("net={net} {e}"));
                return Ok(());
            }
        }
        self.schedule(
            tick + self.cfg.join_timeout,
            Item::JoinTimeout {
                joiner: joiner.to_string(),
                token,
            },
        );
        Ok(())
    }

    fn join_timeout(&mut self, tick: u64, joiner: &str, token: u64) -> Result<(), SimError> {
        let Some(j) = self.joins.get(joiner).filter(|j| j.token == token) else {
            return Ok(());
        };
        let (net, attempt) = (j.net.clone(), j.attempt);
        abort_join(self.devices.get_mut(joiner).expect("known"));
        self.joins.remove(joiner);
        self.record(
            tick,
            joiner,
            "JOIN_TIMEOUT",
            &format!("net={net} attempt={attempt}"),
        );
        if attempt <= self.cfg.max_retries {
            self.record(
                tick,
                joiner,
                "JOIN_RETRY",
                &format!("net={net} attempt={}", attempt + 1),
            );
            self.start_join(tick, joiner, &net, attempt + 1)
        } else {
            self.record(
                tick,
                joiner,
                "JOIN_FAILED",
                &format!("net={net} retries exhausted"),
            );
            Ok(())
        }
    }

    /// The lead encrypts a probe under its net key; every other holder of
    /// an active key for the net tries to read it.
    fn probe(&mut self, tick: u64, net: &str) {
        let Some(spec) = self.cfg.net(net) else {
            return;
        };
        let lead = spec.lead.clone();
        let ct = match self.devices[&lead].net_traffic(NET_CHANNEL, net, PROBE) {
            Ok(ct) => ct,
            Err(_) => {
                self.record(
                    tick,
                    &lead,
                    "TRAFFIC",
                    &format!("net={net} lead has no key"),
                );
                return;
            }
        };
        let mut ok = Vec::new();
        let mut stale = Vec::new();
        for d in spec.holders().skip(1) {
            match self.devices[d].net_traffic(NET_CHANNEL, net, &ct) {
                Ok(pt) if pt == PROBE => ok.push(d.clone()),
                Ok(_) => stale.push(d.clone()),
                Err(_) => {}
            }
        }
        self.record(
            tick,
            &lead,
            "TRAFFIC",
            &format!("net={net} ok={} stale={}", ok.join(","), stale.join(",")),
        );
    }

    fn refresh_red(&mut self) {
        for d in self.devices.values() {
            for ch in d.channel_names() {
                for r in d.keys(ch) {
                    if let Some(b) = r.key_bytes() {
                        if !self.red.contains(b) {
                            self.red.insert(b.to_vec());
                        }
                    }
                }
            }
        }
    }

    fn check_sessions(&self) -> Result<(), SimError> {
        for (id, d) in &self.devices {
            if !self.joins.contains_key(id) && active_session_keys(d) > 0 && !d.y_busy() {
                return Err(SimError::Invariant(format!(
                    "{id} holds an active session key outside a join"
                )));
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SimOutcome, SimError> {
        for (id, d) in &self.devices {
            for ch in d.channel_names() {
                for r in d.keys(ch) {
                    if r.state() == KeyState::Destroyed && r.stored_bytes().iter().any(|b| *b != 0)
                    {
                        return Err(SimError::Invariant(format!(
                            "{id}: destroyed key {} still holds bytes",
                            r.key_id
                        )));
                    }
                }
            }
        }
        let end = self
            .log
            .last()
            .and_then(|l| l.split('|').next()?.parse().ok())
            .unwrap_or(0);
        let rsms = self.rsms_id.clone();
        self.record(end, &rsms, "END", &format!("messages={}", self.msg_id));
        Ok(SimOutcome {
            seed: 0,
            log: self.log,
            devices: self.devices,
            rnms: self.rnms,
            kdms: self.kdms,
            wire: self.wire,
            red_keys: self.red,
            session_keys: self.sessions,
        })
    }
}
