use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Level {
    Unclassified = 0,
    NationalConfidential = 1,
    NatoSecret = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Compartment {
    National = 1,
    Nato = 2,
}

/// Classification level plus an optional national/NATO compartment tag.
///
/// Only levels are ordered. A clearance dominates a label when its level is
/// at least the label's level and, if the label names a compartment, the
/// clearance names the same one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassificationLabel {
    pub level: Level,
    pub compartment: Option<Compartment>,
}

impl ClassificationLabel {
    pub const UNCLASSIFIED: Self = Self::new(Level::Unclassified, None);
    pub const NATIONAL_CONFIDENTIAL: Self =
        Self::new(Level::NationalConfidential, Some(Compartment::National));
    pub const NATO_SECRET: Self = Self::new(Level::NatoSecret, Some(Compartment::Nato));

    pub const fn new(level: Level, compartment: Option<Compartment>) -> Self {
        ClassificationLabel { level, compartment }
    }

    pub fn dominates(&self, label: &ClassificationLabel) -> bool {
        self.level >= label.level
            && (label.compartment.is_none() || label.compartment == self.compartment)
    }

    /// Level in the low nibble, compartment in the high nibble.
    pub fn to_byte(self) -> u8 {
        self.level as u8 | (self.compartment.map_or(0, |c| c as u8) << 4)
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        let level = match b & 0x0f {
            0 => Level::Unclassified,
            1 => Level::NationalConfidential,
            2 => Level::NatoSecret,
            _ => return None,
        };
        let compartment = match b >> 4 {
            0 => None,
            1 => Some(Compartment::National),
            2 => Some(Compartment::Nato),
            _ => return None,
        };
        Some(ClassificationLabel { level, compartment })
    }
}

impl fmt::Display for ClassificationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            Level::Unclassified => "UNCLASSIFIED",
            Level::NationalConfidential => "NATIONAL_CONFIDENTIAL",
            Level::NatoSecret => "NATO_SECRET",
        };
        f.write_str(level)?;
        match self.compartment {
            Some(Compartment::National) => f.write_str("/NATIONAL"),
            Some(Compartment::Nato) => f.write_str("/NATO"),
            None => Ok(()),
        }
    }
}

impl FromStr for ClassificationLabel {
    type Err = String;

    /// `LEVEL` or `LEVEL/COMPARTMENT`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (level, comp) = match s.trim().split_once('/') {
            Some((l, c)) => (l.trim(), Some(c.trim())),
            None => (s.trim(), None),
        };
        let level = match level.to_ascii_uppercase().as_str() {
            "UNCLASSIFIED" => Level::Unclassified,
            "NATIONAL_CONFIDENTIAL" => Level::NationalConfidential,
            "NATO_SECRET" => Level::NatoSecret,
            other => return Err(format!("unknown classification level `{other}`")),
        };
        let compartment = match comp.map(|c| c.to_ascii_uppercase()) {
            None => None,
            Some(c) if c == "NATIONAL" => Some(Compartment::National),
            Some(c) if c == "NATO" => Some(Compartment::Nato),
            Some(c) => return Err(format!("unknown compartment `{c}`")),
        };
        Ok(ClassificationLabel { level, compartment })
    }
}
