use std::collections::BTreeMap;
use std::fmt;

use crate::cryptosuite::wipe;
use crate::nodes::ClassificationLabel;
use crate::wire::{Reader, WireError, Writer};

use super::LifecycleError;

pub const KEYSTORE_MAGIC: &[u8; 4] = b"KSTO";
pub const KEYSTORE_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum KeyKind {
    /// Administrative: long-lived, always carries a validity window.
    Asm = 1,
    /// Operational: organizational validity only.
    Osm = 2,
    Session = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum KeyState {
    Active = 1,
    Standby = 2,
    Expired = 3,
    Destroyed = 4,
}

impl KeyState {
    pub fn can_become(self, next: KeyState) -> bool {
        matches!(
            (self, next),
            (KeyState::Active, KeyState::Expired)
                | (KeyState::Active, KeyState::Destroyed)
                | (KeyState::Standby, KeyState::Active)
                | (KeyState::Standby, KeyState::Destroyed)
        )
    }
}

impl fmt::Display for KeyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyState::Active => "ACTIVE",
            KeyState::Standby => "STANDBY",
            KeyState::Expired => "EXPIRED",
            KeyState::Destroyed => "DESTROYED",
        })
    }
}

impl fmt::Display for KeyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyKind::Asm => "ASM",
            KeyKind::Osm => "OSM",
            KeyKind::Session => "SESSION",
        })
    }
}

/// Inclusive tick window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub from: u64,
    pub to: u64,
}

impl Window {
    pub fn new(from: u64, to: u64) -> Self {
        Window { from, to }
    }

    pub fn contains(&self, now: u64) -> bool {
        self.from <= now && now <= self.to
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub key_id: String,
    pub kind: KeyKind,
    /// Free-form purpose tag such as `net`, `transport` or `root`.
    pub role: String,
    key_bytes: Vec<u8>,
    pub classification: ClassificationLabel,
    validity: Option<Window>,
    state: KeyState,
    pub infrastructure_id: String,
}

impl fmt::Debug for KeyRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRecord")
            .field("key_id", &self.key_id)
            .field("kind", &self.kind)
            .field("role", &self.role)
            .field("classification", &self.classification)
            .field("validity", &self.validity)
            .field("state", &self.state)
            .field("infrastructure_id", &self.infrastructure_id)
            .finish_non_exhaustive()
    }
}

impl KeyRecord {
    /// ASM records must carry a window; the others may.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        key_id: impl Into<String>,
        kind: KeyKind,
        role: impl Into<String>,
        key_bytes: Vec<u8>,
        classification: ClassificationLabel,
        validity: Option<Window>,
        state: KeyState,
        infrastructure_id: impl Into<String>,
    ) -> Result<Self, LifecycleError> {
        let key_id = key_id.into();
        if kind == KeyKind::Asm && validity.is_none() {
            return Err(LifecycleError::MissingWindow(key_id));
        }
        if let Some(w) = validity {
            if w.from > w.to {
                return Err(LifecycleError::InvertedWindow(key_id));
            }
        }
        if !matches!(state, KeyState::Active | KeyState::Standby) {
            return Err(LifecycleError::IllegalInitialState(key_id, state));
        }
        Ok(KeyRecord {
            key_id,
            kind,
            role: role.into(),
            key_bytes,
            classification,
            validity,
            state,
            infrastructure_id: infrastructure_id.into(),
        })
    }

    pub fn osm(
        key_id: impl Into<String>,
        role: impl Into<String>,
        key_bytes: Vec<u8>,
        classification: ClassificationLabel,
        infrastructure_id: impl Into<String>,
    ) -> Self {
        Self::new(
            key_id,
            KeyKind::Osm,
            role,
            key_bytes,
            classification,
            None,
            KeyState::Active,
            infrastructure_id,
        )
        .expect("OSM records need no window")
    }

    pub fn state(&self) -> KeyState {
        self.state
    }

    pub fn validity(&self) -> Option<Window> {
        self.validity
    }

    /// Key bytes, or `None` once destroyed.
    pub fn key_bytes(&self) -> Option<&[u8]> {
        (self.state != KeyState::Destroyed).then_some(self.key_bytes.as_slice())
    }

    /// Raw storage, erased or not. Used by scanners.
    pub fn stored_bytes(&self) -> &[u8] {
        &self.key_bytes
    }

    pub fn transition(&mut self, next: KeyState) -> Result<(), LifecycleError> {
        if self.state == next && next == KeyState::Destroyed {
            return Ok(());
        }
        if !self.state.can_become(next) {
            return Err(LifecycleError::IllegalTransition {
                key_id: self.key_id.clone(),
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        if next == KeyState::Destroyed {
            wipe(&mut self.key_bytes);
            self.key_bytes.clear();
        }
        Ok(())
    }

    /// Terminal and idempotent.
    pub fn destroy(&mut self) {
        if self.state == KeyState::Expired {
            // Expired keys still hold bytes; erase them as well.
            wipe(&mut self.key_bytes);
            self.key_bytes.clear();
            self.state = KeyState::Destroyed;
            return;
        }
        let _ = self.transition(KeyState::Destroyed);
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.str16(&self.key_id)
            .u8(self.kind as u8)
            .str16(&self.role)
            .bytes32(&self.key_bytes)
            .u8(self.classification.to_byte());
        match self.validity {
            Some(v) => w.u8(1).u64(v.from).u64(v.to),
            None => w.u8(0),
        };
        w.u8(self.state as u8).str16(&self.infrastructure_id);
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self, WireError> {
        let key_id = r.str16("key_id")?;
        let kind = match r.u8()? {
            1 => KeyKind::Asm,
            2 => KeyKind::Osm,
            3 => KeyKind::Session,
            _ => return Err(WireError::invalid("kind", "unknown key kind")),
        };
        let role = r.str16("role")?;
        let key_bytes = r.bytes32()?.to_vec();
        let classification = ClassificationLabel::from_byte(r.u8()?)
            .ok_or_else(|| WireError::invalid("classification", "unknown label"))?;
        let validity = match r.u8()? {
            0 => None,
            1 => Some(Window::new(r.u64()?, r.u64()?)),
            _ => return Err(WireError::invalid("validity", "bad flag")),
        };
        let state = match r.u8()? {
            1 => KeyState::Active,
            2 => KeyState::Standby,
            3 => KeyState::Expired,
            4 => KeyState::Destroyed,
            _ => return Err(WireError::invalid("state", "unknown state")),
        };
        let infrastructure_id = r.str16("infrastructure_id")?;
        if kind == KeyKind::Asm && validity.is_none() {
            return Err(WireError::invalid("validity", "ASM record without window"));
        }
        if state == KeyState::Destroyed && !key_bytes.is_empty() {
            return Err(WireError::invalid(
                "key_bytes",
                "destroyed record holds bytes",
            ));
        }
        Ok(KeyRecord {
            key_id,
            kind,
            role,
            key_bytes,
            classification,
            validity,
            state,
            infrastructure_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Usability {
    Usable,
    Expired,
}

pub fn validity_check(record: &KeyRecord, now: u64) -> Usability {
    let in_window = record.validity.is_none_or(|w| w.contains(now));
    if record.state == KeyState::Active && in_window {
        Usability::Usable
    } else {
        Usability::Expired
    }
}

/// Records keyed by id, with at most one standby per infrastructure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyStore {
    records: BTreeMap<String, KeyRecord>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: KeyRecord) -> Result<(), LifecycleError> {
        if self.records.contains_key(&record.key_id) {
            return Err(LifecycleError::DuplicateKey(record.key_id));
        }
        if record.state == KeyState::Standby
            && self.standby_for(&record.infrastructure_id).is_some()
        {
            return Err(LifecycleError::StandbyExists(record.infrastructure_id));
        }
        self.records.insert(record.key_id.clone(), record);
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<&KeyRecord> {
        self.records.get(key_id)
    }

    pub fn get_mut(&mut self, key_id: &str) -> Option<&mut KeyRecord> {
        self.records.get_mut(key_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &KeyRecord> {
        self.records.values()
    }

    pub fn records_mut(&mut self) -> impl Iterator<Item = &mut KeyRecord> {
        self.records.values_mut()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn active_for<'a>(&'a self, infra: &'a str) -> impl Iterator<Item = &'a KeyRecord> + 'a {
        self.records
            .values()
            .filter(move |r| r.infrastructure_id == infra && r.state == KeyState::Active)
    }

    pub fn standby_for(&self, infra: &str) -> Option<&KeyRecord> {
        self.records
            .values()
            .find(|r| r.infrastructure_id == infra && r.state == KeyState::Standby)
    }

    /// Moves ACTIVE records whose window has closed to EXPIRED. Returns
    /// their ids.
    pub fn expire(&mut self, now: u64) -> Vec<String> {
        let mut out = Vec::new();
        for r in self.records.values_mut() {
            if r.state == KeyState::Active && r.validity.is_some_and(|w| now > w.to) {
                r.state = KeyState::Expired;
                out.push(r.key_id.clone());
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(KEYSTORE_MAGIC, KEYSTORE_FORMAT_VERSION);
        w.u32(self.records.len() as u32);
        for r in self.records.values() {
            r.write(&mut w);
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(KEYSTORE_MAGIC)?;
        if version != KEYSTORE_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let n = r.u32()?;
        let mut store = KeyStore::new();
        for _ in 0..n {
            let rec = KeyRecord::read(&mut r)?;
            store
                .insert(rec)
                .map_err(|e| WireError::invalid("records", e.to_string()))?;
        }
        r.finish()?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asm(id: &str, state: KeyState) -> KeyRecord {
        KeyRecord::new(
            id,
            KeyKind::Asm,
            "transport",
            vec![7; 32],
            ClassificationLabel::NATO_SECRET,
            Some(Window::new(0, 100)),
            state,
            "infra-a",
        )
        .unwrap()
    }

    #[test]
    fn asm_requires_window() {
        let r = KeyRecord::new(
            "k",
            KeyKind::Asm,
            "root",
            vec![1],
            ClassificationLabel::UNCLASSIFIED,
            None,
            KeyState::Active,
            "i",
        );
        assert_eq!(r, Err(LifecycleError::MissingWindow("k".into())));
    }

    #[test]
    fn validity_examples() {
        let a = asm("a", KeyState::Active);
        assert_eq!(validity_check(&a, 100), Usability::Usable);
        assert_eq!(validity_check(&a, 101), Usability::Expired);
        let o = KeyRecord::osm(
            "o",
            "net",
            vec![1; 32],
            ClassificationLabel::UNCLASSIFIED,
            "n",
        );
        assert_eq!(validity_check(&o, u64::MAX), Usability::Usable);
        let mut d = o.clone();
        d.destroy();
        assert_eq!(validity_check(&d, 0), Usability::Expired);
    }

    #[test]
    fn transitions() {
        use KeyState::*;
        let all = [Active, Standby, Expired, Destroyed];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(
            allowed,
            vec![
                (Active, Expired),
                (Active, Destroyed),
                (Standby, Active),
                (Standby, Destroyed)
            ]
        );
        let mut r = asm("a", Standby);
        r.transition(Active).unwrap();
        assert!(r.transition(Standby).is_err());
        r.transition(Destroyed).unwrap();
        assert!(r.key_bytes().is_none());
        assert!(r.stored_bytes().is_empty());
        assert!(r.transition(Active).is_err());
        r.destroy();
        assert_eq!(r.state(), Destroyed);
    }

    #[test]
    fn one_standby_per_infrastructure() {
        let mut s = KeyStore::new();
        s.insert(asm("a", KeyState::Standby)).unwrap();
        assert_eq!(
            s.insert(asm("b", KeyState::Standby)),
            Err(LifecycleError::StandbyExists("infra-a".into()))
        );
        assert_eq!(
            s.insert(asm("a", KeyState::Active)),
            Err(LifecycleError::DuplicateKey("a".into()))
        );
    }

    #[test]
    fn expiry_sweep_and_snapshot() {
        let mut s = KeyStore::new();
        s.insert(asm("a", KeyState::Active)).unwrap();
        s.insert(KeyRecord::osm(
            "o",
            "net",
            vec![2; 32],
            ClassificationLabel::UNCLASSIFIED,
            "n",
        ))
        .unwrap();
        assert_eq!(s.expire(101), vec!["a".to_string()]);
        s.get_mut("o").unwrap().destroy();
        let bytes = s.encode();
        assert_eq!(KeyStore::decode(&bytes).unwrap(), s);
        assert!(KeyStore::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
