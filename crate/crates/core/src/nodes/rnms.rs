//! Regional network management: stores each container once, forwards it
//! with the per-recipient headers, and replicates planning data.

use std::collections::{BTreeMap, BTreeSet};

use crate::container::{inspect_header, inspect_outer, ContainerId};
use crate::wire::{Reader, WireError, Writer};

use super::message::{Channel, Message, MsgType};

pub const RNMS_SNAPSHOT_MAGIC: &[u8; 4] = b"RNMS";

/// One last-writer-wins register. Writes are ordered by `(lamport, writer)`
/// and ties on both fall back to the value, so merging is order-free.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlanEntry {
    pub lamport: u64,
    pub writer: String,
    pub value: String,
}

/// Replicated planning map. Every replica converges to the same content
/// once it has seen the same writes, whatever the delivery order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlanningStore {
    peer: String,
    entries: BTreeMap<String, PlanEntry>,
}

impl PlanningStore {
    pub fn new(peer: impl Into<String>) -> Self {
        PlanningStore {
            peer: peer.into(),
            entries: BTreeMap::new(),
        }
    }

    fn clock(&self) -> u64 {
        self.entries.values().map(|e| e.lamport).max().unwrap_or(0)
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let entry = PlanEntry {
            lamport: self.clock() + 1,
            writer: self.peer.clone(),
            value: value.into(),
        };
        self.entries.insert(key.into(), entry);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn entries(&self) -> &BTreeMap<String, PlanEntry> {
        &self.entries
    }

    /// Content without replica identity, for convergence checks.
    pub fn view(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    pub fn merge_entry(&mut self, key: &str, incoming: PlanEntry) -> bool {
        match self.entries.get(key) {
            Some(cur) if *cur >= incoming => false,
            _ => {
                self.entries.insert(key.to_string(), incoming);
                true
            }
        }
    }

    pub fn merge(&mut self, other: &PlanningStore) -> usize {
        other
            .entries
            .iter()
            .filter(|(k, e)| self.merge_entry(k, (*e).clone()))
            .count()
    }

    /// Key, clock and writer for each entry; the body of SYNC_DIGEST.
    pub fn digest(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.entries.len() as u32);
        for (k, e) in &self.entries {
            w.str16(k).u64(e.lamport).str16(&e.writer);
        }
        w.into_bytes()
    }

    /// Entries newer than those described by a peer's digest; the body of
    /// SYNC_DELTA.
    pub fn delta_for(&self, digest: &[u8]) -> Result<Vec<u8>, WireError> {
        let mut r = Reader::new(digest);
        let mut known = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.str16("key")?;
            let lamport = r.u64()?;
            let writer = r.str16("writer")?;
            known.insert(k, (lamport, writer));
        }
        r.finish()?;
        let newer: Vec<_> = self
            .entries
            .iter()
            .filter(|(k, e)| {
                known
                    .get(*k)
                    .is_none_or(|(l, w)| (e.lamport, &e.writer) >= (*l, w))
            })
            .collect();
        let mut w = Writer::new();
        w.u32(newer.len() as u32);
        for (k, e) in newer {
            w.str16(k).u64(e.lamport).str16(&e.writer).str16(&e.value);
        }
        Ok(w.into_bytes())
    }

    pub fn apply_delta(&mut self, delta: &[u8]) -> Result<usize, WireError> {
        let mut r = Reader::new(delta);
        let mut parsed = Vec::new();
        for _ in 0..r.u32()? {
            let k = r.str16("key")?;
            let entry = PlanEntry {
                lamport: r.u64()?,
                writer: r.str16("writer")?,
                value: r.str16("value")?,
            };
            parsed.push((k, entry));
        }
        r.finish()?;
        Ok(parsed
            .into_iter()
            .filter(|(k, e)| self.merge_entry(k, e.clone()))
            .count())
    }
}

/// One digest/delta round in each direction between two RNMS replicas.
pub fn rms_sync(a: &mut RnmsState, b: &mut RnmsState) -> usize {
    let da = a.planning.digest();
    let db = b.planning.digest();
    let to_b = a.planning.delta_for(&db).expect("own digest parses");
    let to_a = b.planning.delta_for(&da).expect("own digest parses");
    b.planning.apply_delta(&to_b).expect("own delta parses")
        + a.planning.apply_delta(&to_a).expect("own delta parses")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnmsState {
    pub id: String,
    /// Channel used towards devices.
    pub downlink: Channel,
    containers: BTreeMap<ContainerId, Vec<u8>>,
    headers: BTreeMap<(ContainerId, String), Vec<u8>>,
    delivered: BTreeSet<(ContainerId, String)>,
    pending: BTreeMap<ContainerId, Vec<Message>>,
    audit: Vec<String>,
    quarantine: Vec<Message>,
    pub planning: PlanningStore,
}

impl RnmsState {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        RnmsState {
            planning: PlanningStore::new(id.clone()),
            id,
            downlink: Channel::X,
            containers: BTreeMap::new(),
            headers: BTreeMap::new(),
            delivered: BTreeSet::new(),
            pending: BTreeMap::new(),
            audit: Vec::new(),
            quarantine: Vec::new(),
        }
    }

    pub fn stored_containers(&self) -> usize {
        self.containers.len()
    }

    /// Bytes held for `id`: one container plus its headers.
    pub fn storage_for(&self, id: &ContainerId) -> (usize, usize) {
        let c = self.containers.get(id).map_or(0, Vec::len);
        let h = self
            .headers
            .iter()
            .filter(|((cid, _), _)| cid == id)
            .map(|(_, b)| b.len())
            .sum();
        (c, h)
    }

    /// Everything the node holds, serialized. Contains only sealed
    /// containers, headers and planning data.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(RNMS_SNAPSHOT_MAGIC, 1);
        w.str16(&self.id).u32(self.containers.len() as u32);
        for (id, c) in &self.containers {
            w.raw(id).bytes32(c);
        }
        w.u32(self.headers.len() as u32);
        for ((id, r), h) in &self.headers {
            w.raw(id).str16(r).bytes32(h);
        }
        w.bytes32(&self.planning.digest());
        w.into_bytes()
    }

    pub fn audit(&self) -> &[String] {
        &self.audit
    }

    pub fn quarantined(&self) -> &[Message] {
        &self.quarantine
    }

    fn reject(&mut self, tick: u64, msg: &Message, reason: &str) {
        self.audit.push(format!(
            "{tick}|{}|QUARANTINE|{} from {}: {reason}",
            self.id,
            msg.msg_type(),
            msg.sender()
        ));
        self.quarantine.push(msg.clone());
    }

    fn release(
        &mut self,
        cid: ContainerId,
        header: &Message,
        recipient: String,
        out: &mut Vec<Message>,
    ) {
        if self.delivered.insert((cid, recipient.clone())) {
            let body = self.containers[&cid].clone();
            out.push(
                Message::new(
                    MsgType::Container,
                    &self.id,
                    &recipient,
                    self.downlink,
                    body,
                )
                .expect("not a transfer"),
            );
        }
        out.push(header.forwarded(&self.id, &recipient, self.downlink));
    }

    /// Routes one inbound message and returns what to send on. Routing reads
    /// only the outer fields; payloads stay sealed.
    pub fn route(&mut self, msg: &Message, tick: u64) -> Vec<Message> {
        let mut out = Vec::new();
        match msg.msg_type() {
            MsgType::Container => match inspect_outer(msg.body()) {
                Ok(info) => {
                    self.containers
                        .entry(info.container_id)
                        .or_insert_with(|| msg.body().to_vec());
                    for h in self.pending.remove(&info.container_id).unwrap_or_default() {
                        let recipient = inspect_header(h.body())
                            .expect("checked on arrival")
                            .recipient_id;
                        self.release(info.container_id, &h, recipient, &mut out);
                    }
                }
                Err(e) => self.reject(tick, msg, &e.to_string()),
            },
            MsgType::Header => match inspect_header(msg.body()) {
                Ok(info) => {
                    self.headers.insert(
                        (info.container_id, info.recipient_id.clone()),
                        msg.body().to_vec(),
                    );
                    if self.containers.contains_key(&info.container_id) {
                        self.release(info.container_id, msg, info.recipient_id, &mut out);
                    } else {
                        self.pending
                            .entry(info.container_id)
                            .or_default()
                            .push(msg.clone());
                    }
                }
                Err(e) => self.reject(tick, msg, &e.to_string()),
            },
            MsgType::SyncDigest => match self.planning.delta_for(msg.body()) {
                Ok(delta) => out.push(
                    Message::new(
                        MsgType::SyncDelta,
                        &self.id,
                        msg.sender(),
                        msg.channel(),
                        delta,
                    )
                    .expect("not a transfer"),
                ),
                Err(e) => self.reject(tick, msg, &e.to_string()),
            },
            MsgType::SyncDelta => {
                if let Err(e) = self.planning.apply_delta(msg.body()) {
                    self.reject(tick, msg, &e.to_string());
                }
            }
            _ => self.reject(tick, msg, "not routable"),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(s: &mut RnmsState, k: &str, v: &str) {
        s.planning.put(k, v);
    }

    #[test]
    fn sync_converges() {
        let mut a = RnmsState::new("rnms-a");
        let mut b = RnmsState::new("rnms-b");
        put(&mut a, "freq", "1");
        put(&mut b, "freq", "2");
        put(&mut b, "slot", "3");
        rms_sync(&mut a, &mut b);
        assert_eq!(a.planning.view(), b.planning.view());
        assert_eq!(a.planning.get("freq"), Some("2"));
        assert_eq!(rms_sync(&mut a, &mut b), 0);
    }

    #[test]
    fn digest_and_delta_messages() {
        let mut a = RnmsState::new("a");
        let mut b = RnmsState::new("b");
        put(&mut a, "k", "v");
        let digest = Message::new(
            MsgType::SyncDigest,
            "b",
            "a",
            Channel::Wired,
            b.planning.digest(),
        )
        .unwrap();
        let reply = a.route(&digest, 1);
        assert_eq!(reply.len(), 1);
        b.route(&reply[0], 2);
        assert_eq!(b.planning.get("k"), Some("v"));
    }

    #[test]
    fn junk_is_quarantined() {
        let mut r = RnmsState::new("rnms");
        let m = Message::new(
            MsgType::Container,
            "rsms",
            "rnms",
            Channel::Wired,
            vec![1, 2, 3],
        )
        .unwrap();
        assert!(r.route(&m, 5).is_empty());
        assert_eq!(r.quarantined().len(), 1);
        assert!(r.audit()[0].starts_with("5|rnms|QUARANTINE|CONTAINER"));
        let j = Message::new(MsgType::JoinRequest, "d", "rnms", Channel::Y, vec![]).unwrap();
        r.route(&j, 6);
        assert_eq!(r.quarantined().len(), 2);
    }
}
