//! Key packages, NGDM batch generation and n-of-n share combination.

use crate::cryptosuite::arith::derive_seed;
use crate::cryptosuite::{keystream, KeystreamError, SuiteId, SuiteRegistry, SymmetricKey};
use crate::lifecycle::{KeyRecord, KeyState};
use crate::wire::{Reader, WireError, Writer};

use super::{ClassificationLabel, NodeError};

pub const KEY_PACKAGE_MAGIC: &[u8; 4] = b"KPKG";
pub const KEY_PACKAGE_FORMAT_VERSION: u16 = 1;

/// Several key records bundled for bulk loading. Travels only inside a
/// sealed container.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyPackage {
    pub records: Vec<KeyRecord>,
}

impl KeyPackage {
    pub fn new(records: Vec<KeyRecord>) -> Self {
        KeyPackage { records }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(KEY_PACKAGE_MAGIC, KEY_PACKAGE_FORMAT_VERSION);
        w.u32(self.records.len() as u32);
        for r in &self.records {
            r.write(&mut w);
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(KEY_PACKAGE_MAGIC)?;
        if version != KEY_PACKAGE_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let n = r.u32()?;
        let mut records = Vec::new();
        for _ in 0..n {
            let rec = KeyRecord::read(&mut r)?;
            if !matches!(rec.state(), KeyState::Active | KeyState::Standby) {
                return Err(WireError::invalid("state", "packages carry live keys only"));
            }
            records.push(rec);
        }
        r.finish()?;
        Ok(KeyPackage { records })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSpec {
    pub count: usize,
    pub classification: ClassificationLabel,
    pub suite_id: SuiteId,
    pub infrastructure_id: String,
    /// Prefix for generated key ids: `<prefix>-<index>`.
    pub id_prefix: String,
}

/// `count` OSM keys. Key `i` hashes a per-key seed together with 32 bytes
/// of the suite keystream under that seed.
pub fn ngdm_generate_batch(
    spec: &BatchSpec,
    suites: &SuiteRegistry,
    seed: [u8; 32],
) -> Result<Vec<KeyRecord>, NodeError> {
    if spec.count == 0 {
        return Err(NodeError::EmptyBatch);
    }
    let suite = suites
        .lookup(spec.suite_id)
        .map_err(|_| NodeError::UnknownSuite(spec.suite_id))?;
    let hash = suite.hash();
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut attempt = 0u32;
        let stream = loop {
            let label = format!("ngdm/key/{i}/{attempt}");
            let key_seed = derive_seed(&seed, &label);
            match keystream(&SymmetricKey::new(key_seed, spec.suite_id), suite, 32) {
                Ok(s) => break (key_seed, s),
                // Only reachable at toy moduli: the seed hit a factor.
                Err(KeystreamError::Rekey) => attempt += 1,
                Err(e) => return Err(NodeError::Keystream(e)),
            }
        };
        let key = hash.digest(&[b"ngdm/key", &stream.0, &stream.1]);
        out.push(KeyRecord::osm(
            format!("{}-{i}", spec.id_prefix),
            "net-share",
            key.to_vec(),
            spec.classification,
            spec.infrastructure_id.clone(),
        ));
    }
    Ok(out)
}

/// Byte-wise XOR of equal-length shares.
pub fn combine_shares(shares: &[&[u8]]) -> Result<Vec<u8>, NodeError> {
    let first = shares.first().ok_or(NodeError::NoShares)?;
    let mut out = first.to_vec();
    for s in &shares[1..] {
        if s.len() != out.len() {
            return Err(NodeError::ShareLength {
                expected: out.len(),
                found: s.len(),
            });
        }
        out.iter_mut().zip(s.iter()).for_each(|(o, b)| *o ^= b);
    }
    Ok(out)
}

/// n-of-n combination of operational key shares from independent OSMs.
pub fn combine_operational_keys(shares: &[SymmetricKey]) -> Result<SymmetricKey, NodeError> {
    let first = shares.first().ok_or(NodeError::NoShares)?;
    if let Some(s) = shares.iter().find(|s| s.suite_id() != first.suite_id()) {
        return Err(NodeError::SuiteMismatch(first.suite_id(), s.suite_id()));
    }
    let parts: Vec<&[u8]> = shares.iter().map(|s| s.as_bytes().as_slice()).collect();
    let bytes = combine_shares(&parts)?;
    Ok(SymmetricKey::from_slice(&bytes, first.suite_id()).expect("32-byte shares"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptosuite::toy_suite;
    use std::collections::BTreeSet;

    fn spec(count: usize) -> BatchSpec {
        BatchSpec {
            count,
            classification: ClassificationLabel::NATIONAL_CONFIDENTIAL,
            suite_id: SuiteId(1),
            infrastructure_id: "net-a".into(),
            id_prefix: "osm".into(),
        }
    }

    #[test]
    fn batch_is_distinct_and_deterministic() {
        let reg = SuiteRegistry::new(toy_suite());
        let a = ngdm_generate_batch(&spec(5), &reg, [4; 32]).unwrap();
        let b = ngdm_generate_batch(&spec(5), &reg, [4; 32]).unwrap();
        assert_eq!(a, b);
        let keys: BTreeSet<_> = a.iter().map(|r| r.key_bytes().unwrap().to_vec()).collect();
        assert_eq!(keys.len(), 5);
        assert!(a
            .iter()
            .all(|r| r.key_bytes().unwrap().len() == 32 && r.validity().is_none()));
    }

    #[test]
    fn batch_errors() {
        let reg = SuiteRegistry::new(toy_suite());
        assert_eq!(
            ngdm_generate_batch(&spec(0), &reg, [0; 32]),
            Err(NodeError::EmptyBatch)
        );
        let mut s = spec(1);
        s.suite_id = SuiteId(5);
        assert_eq!(
            ngdm_generate_batch(&s, &reg, [0; 32]),
            Err(NodeError::UnknownSuite(SuiteId(5)))
        );
    }

    #[test]
    fn combination_examples() {
        let k = |b| SymmetricKey::new([b; 32], SuiteId(1));
        assert_eq!(
            combine_operational_keys(&[k(0xA5), k(0x5A)]).unwrap(),
            k(0xFF)
        );
        assert_eq!(combine_operational_keys(&[k(0x13)]).unwrap(), k(0x13));
        assert_eq!(
            combine_operational_keys(&[k(1), k(2), k(4)]).unwrap(),
            combine_operational_keys(&[k(4), k(1), k(2)]).unwrap()
        );
        assert_eq!(combine_operational_keys(&[]), Err(NodeError::NoShares));
        assert!(combine_shares(&[&[1, 2], &[1]]).is_err());
    }

    #[test]
    fn package_round_trip() {
        let reg = SuiteRegistry::new(toy_suite());
        let p = KeyPackage::new(ngdm_generate_batch(&spec(3), &reg, [1; 32]).unwrap());
        assert_eq!(KeyPackage::decode(&p.encode()).unwrap(), p);
    }
}
