use thiserror::Error;

use crate::identity::Certificate;
use crate::nodes::ClassificationLabel;
use crate::wire::{Reader, WireError, Writer};

use super::FULL_MAGIC;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"SDRA";
pub const ARCHIVE_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EntryType {
    Waveform = 0x01,
    Policy = 0x02,
    KeyMaterial = 0x03,
    Certificate = 0x04,
    AlgorithmUpdate = 0x05,
}

impl EntryType {
    pub const ALL: [EntryType; 5] = [
        EntryType::Waveform,
        EntryType::Policy,
        EntryType::KeyMaterial,
        EntryType::Certificate,
        EntryType::AlgorithmUpdate,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryType::Waveform => "WAVEFORM",
            EntryType::Policy => "POLICY",
            EntryType::KeyMaterial => "KEY_MATERIAL",
            EntryType::Certificate => "CERTIFICATE",
            EntryType::AlgorithmUpdate => "ALGORITHM_UPDATE",
        }
    }
}

impl std::str::FromStr for EntryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|t| t.name() == upper)
            .ok_or_else(|| format!("unknown entry type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub entry_type: EntryType,
    pub name: String,
    pub classification: ClassificationLabel,
    pub content: Vec<u8>,
}

impl ArchiveEntry {
    pub fn new(
        entry_type: EntryType,
        name: impl Into<String>,
        classification: ClassificationLabel,
        content: impl Into<Vec<u8>>,
    ) -> Self {
        ArchiveEntry {
            entry_type,
            name: name.into(),
            classification,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchiveError {
    #[error("archive holds no entries")]
    Empty,
    #[error("archive holds more than 65535 entries")]
    TooManyEntries,
    #[error("entry {index} holds a serialized container; containers may not be stacked")]
    Nesting { index: usize },
    #[error("archive holds more than one certificate entry")]
    DuplicateCertificate,
    #[error("certificate entry {index} does not parse")]
    BadCertificate { index: usize },
    #[error("entry name longer than 65535 bytes")]
    NameTooLong,
    #[error("archive encoding: {0}")]
    Encoding(#[from] WireError),
}

fn check_entries(entries: &[ArchiveEntry]) -> Result<(), ArchiveError> {
    if entries.is_empty() {
        return Err(ArchiveError::Empty);
    }
    if entries.len() > u16::MAX as usize {
        return Err(ArchiveError::TooManyEntries);
    }
    let mut certs = 0;
    for (index, e) in entries.iter().enumerate() {
        if e.content.starts_with(FULL_MAGIC) {
            return Err(ArchiveError::Nesting { index });
        }
        if e.name.len() > u16::MAX as usize {
            return Err(ArchiveError::NameTooLong);
        }
        if e.entry_type == EntryType::Certificate {
            certs += 1;
            if certs > 1 {
                return Err(ArchiveError::DuplicateCertificate);
            }
            Certificate::decode(&e.content).map_err(|_| ArchiveError::BadCertificate { index })?;
        }
    }
    Ok(())
}

/// Canonical archive bytes. Entry order is preserved.
pub fn build_inner_archive(entries: &[ArchiveEntry]) -> Result<Vec<u8>, ArchiveError> {
    check_entries(entries)?;
    let mut w = Writer::with_magic(ARCHIVE_MAGIC, ARCHIVE_FORMAT_VERSION);
    w.u16(entries.len() as u16);
    for e in entries {
        w.u8(e.entry_type as u8)
            .str16(&e.name)
            .u8(e.classification.to_byte())
            .bytes64(&e.content);
    }
    Ok(w.into_bytes())
}

/// Parses and re-checks every archive invariant, including anti-nesting.
pub fn parse_inner_archive(bytes: &[u8]) -> Result<Vec<ArchiveEntry>, ArchiveError> {
    let mut r = Reader::new(bytes);
    let version = r.expect_magic(ARCHIVE_MAGIC)?;
    if version != ARCHIVE_FORMAT_VERSION {
        return Err(WireError::Version(version).into());
    }
    let count = r.u16()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let entry_type = EntryType::from_u8(r.u8()?)
            .ok_or_else(|| WireError::invalid("entry_type", "unknown type"))?;
        let name = r.str16("name")?;
        let classification = ClassificationLabel::from_byte(r.u8()?)
            .ok_or_else(|| WireError::invalid("classification", "unknown label"))?;
        let content = r.bytes64()?.to_vec();
        entries.push(ArchiveEntry {
            entry_type,
            name,
            classification,
            content,
        });
    }
    r.finish()?;
    check_entries(&entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> ArchiveEntry {
        ArchiveEntry::new(
            EntryType::Policy,
            "rules.txt",
            ClassificationLabel::UNCLASSIFIED,
            b"allow all".to_vec(),
        )
    }

    #[test]
    fn round_trip() {
        let bytes = build_inner_archive(&[policy()]).unwrap();
        assert_eq!(&bytes[..4], b"SDRA");
        assert_eq!(parse_inner_archive(&bytes).unwrap(), vec![policy()]);
    }

    #[test]
    fn layout() {
        let e = ArchiveEntry::new(
            EntryType::Waveform,
            "w",
            ClassificationLabel::NATO_SECRET,
            vec![9],
        );
        let bytes = build_inner_archive(&[e]).unwrap();
        let expected = [
            b"SDRA".as_slice(),
            &[0, 1, 0, 1, 0x01, 0, 1, b'w', 0x22],
            &[0, 0, 0, 0, 0, 0, 0, 1, 9],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn empty_and_nested() {
        assert_eq!(build_inner_archive(&[]), Err(ArchiveError::Empty));
        let mut nested = policy();
        nested.content = b"SDRC\x00\x01rest".to_vec();
        assert_eq!(
            build_inner_archive(&[policy(), nested]),
            Err(ArchiveError::Nesting { index: 1 })
        );
    }

    #[test]
    fn certificate_entries_must_parse() {
        let mut c = policy();
        c.entry_type = EntryType::Certificate;
        assert_eq!(
            build_inner_archive(&[c]),
            Err(ArchiveError::BadCertificate { index: 0 })
        );
    }

    #[test]
    fn trailing_and_truncated_input() {
        let mut bytes = build_inner_archive(&[policy()]).unwrap();
        assert!(parse_inner_archive(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(parse_inner_archive(&bytes).is_err());
    }
}
